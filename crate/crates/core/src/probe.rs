//! Frozen-backbone probes: small heads trained on the activations after one
//! conv block of a trained CNN, and the block × head-kind sweep.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use tinycnn::{probe_head, train, AdamConfig, History, ProbeKind, Samples, Sequential, Tensor, TrainConfig};

use crate::config::ProbeConfig;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_samples, PaucReport, ScoredSample};
use crate::models::{FrameView, QualityScorer};
use crate::models::cnn::cnn_input;
use crate::oracle::QualityLabel;

const TAP_BATCH: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeHead {
    Lin,
    ConvLin,
}

impl ProbeHead {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lin => "lin",
            Self::ConvLin => "conv_lin",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub attach_after_block: usize,
    pub kind: ProbeHead,
    pub conv_channels: usize,
}

impl ProbeSpec {
    pub fn tinycnn_kind(&self) -> ProbeKind {
        match self.kind {
            ProbeHead::Lin => ProbeKind::Linear,
            ProbeHead::ConvLin => ProbeKind::ConvLinear {
                channels: self.conv_channels,
            },
        }
    }

    pub fn model_id(&self) -> String {
        format!("probe-b{}-{}", self.attach_after_block, self.kind.as_str())
    }
}

/// Frames prepared for network input, with their oracle scores and labels.
#[derive(Clone, Debug)]
pub struct NetSet {
    pub split: String,
    pub domain_id: String,
    pub frame_ids: Vec<String>,
    pub s: Vec<f64>,
    pub labels: Vec<QualityLabel>,
    pub inputs: Samples<f32>,
}

impl NetSet {
    pub fn new(split: &str, domain_id: &str, size: usize) -> Self {
        Self {
            split: split.to_string(),
            domain_id: domain_id.to_string(),
            frame_ids: Vec::new(),
            s: Vec::new(),
            labels: Vec::new(),
            inputs: Samples::new([size, size, 1]),
        }
    }

    pub fn push(&mut self, frame: &FrameView<'_>, s: f64, label: QualityLabel) {
        let size = self.inputs.shape[0];
        self.frame_ids.push(frame.frame_id.to_string());
        self.s.push(s);
        self.labels.push(label);
        self.inputs.push(cnn_input(frame.image, size), s as f32);
    }

    pub fn len(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }

    fn scored(&self, q: Vec<f64>) -> Vec<ScoredSample> {
        q.into_iter()
            .enumerate()
            .map(|(i, q)| ScoredSample {
                frame_id: self.frame_ids[i].clone(),
                q,
                s: self.s[i],
                label: self.labels[i],
            })
            .collect()
    }
}

fn chunks(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).step_by(TAP_BATCH).map(move |start| (start..(start + TAP_BATCH).min(n)).collect())
}

/// Backbone activations after `block` for every sample, targets carried over.
pub fn tap_samples(backbone: &Sequential<f32>, samples: &Samples<f32>, block: usize) -> Result<Samples<f32>> {
    let mut out: Option<Samples<f32>> = None;
    for idx in chunks(samples.len()) {
        let (x, _) = samples.batch(&idx);
        let t = backbone.tap(&x, block)?;
        let s = t.shape();
        let feature_shape = [s[1], s[2], s[3]];
        let per = s[1] * s[2] * s[3];
        let set = out.get_or_insert_with(|| Samples::new(feature_shape));
        for (k, &i) in idx.iter().enumerate() {
            set.push(t.data()[k * per..(k + 1) * per].to_vec(), samples.targets[i]);
        }
    }
    out.ok_or_else(|| Error::InvalidArgument("cannot tap an empty sample set".into()))
}

/// Predictions of a network over a sample set, batched.
pub fn predict(net: &Sequential<f32>, samples: &Samples<f32>) -> Result<Vec<f64>> {
    let mut q = Vec::with_capacity(samples.len());
    for idx in chunks(samples.len()) {
        let (x, _) = samples.batch(&idx);
        q.extend(net.forward(&x)?.data().iter().map(|&v| f64::from(v)));
    }
    Ok(q)
}

#[derive(Clone, Debug)]
pub struct TrainedProbe {
    pub spec: ProbeSpec,
    pub head: Sequential<f32>,
    pub history: History,
    pub backbone_sha256: String,
}

pub fn probe_train_config(cfg: &ProbeConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: cfg.max_epochs,
        patience: cfg.patience,
        batch_size: cfg.batch_size,
        adam: AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        seed,
        init_bias_to_mean: true,
    }
}

fn check_block(backbone: &Sequential<f32>, block: usize) -> Result<()> {
    let n = backbone.block_ends().len();
    if block == 0 || block > n {
        return Err(Error::InvalidArgument(format!("probe attach index {block} is outside 1..={n}")));
    }
    Ok(())
}

/// Trains a head on already tapped features. The backbone is only read, and
/// its parameter hash is compared before and after.
pub fn train_probe_on_taps(
    backbone: &Sequential<f32>,
    spec: ProbeSpec,
    train_taps: &Samples<f32>,
    val_taps: &Samples<f32>,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<TrainedProbe> {
    check_block(backbone, spec.attach_after_block)?;
    let before = backbone.param_hash();
    let mut head = probe_head::<f32>(train_taps.shape, spec.tinycnn_kind(), seed);
    let history = train(&mut head, train_taps, val_taps, &probe_train_config(cfg, seed))?;
    let after = backbone.param_hash();
    if before != after {
        return Err(Error::Numeric(format!("backbone changed during probe training ({before} -> {after})")));
    }
    Ok(TrainedProbe {
        spec,
        head,
        history,
        backbone_sha256: after,
    })
}

pub fn train_probe(
    backbone: &Sequential<f32>,
    spec: ProbeSpec,
    train_set: &Samples<f32>,
    val_set: &Samples<f32>,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<TrainedProbe> {
    check_block(backbone, spec.attach_after_block)?;
    let tr = tap_samples(backbone, train_set, spec.attach_after_block)?;
    let va = tap_samples(backbone, val_set, spec.attach_after_block)?;
    train_probe_on_taps(backbone, spec, &tr, &va, cfg, seed)
}

/// Backbone prefix plus probe head as a regular scorer.
#[derive(Clone, Debug)]
pub struct ProbeScorer {
    pub model_id: String,
    pub backbone: Sequential<f32>,
    pub block: usize,
    pub head: Sequential<f32>,
}

impl QualityScorer for ProbeScorer {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn score(&self, frame: &FrameView<'_>) -> Result<f64> {
        let size = self.backbone.input_shape[0];
        let x = Tensor::from_vec(&[1, size, size, 1], cnn_input(frame.image, size));
        let t = self.backbone.tap(&x, self.block)?;
        Ok(f64::from(self.head.forward(&t)?.data()[0]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model_id: String,
    /// `None` for the fully trained network.
    pub block: Option<usize>,
    pub kind: String,
    pub trainable_params: usize,
    pub in_domain: PaucReport,
    pub cross_domain: PaucReport,
    pub epochs: usize,
    pub best_val_mse: Option<f64>,
}

pub struct SweepInputs<'a> {
    pub train: &'a NetSet,
    pub val: &'a NetSet,
    pub in_test: &'a NetSet,
    pub cross_test: &'a NetSet,
    pub max_discard: f64,
    pub config_hash: &'a str,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub backbone_sha256: String,
    pub probes: Vec<TrainedProbe>,
}

/// Every block × head kind, then the full network, each evaluated on the
/// in-domain and cross-domain test sets. `seed_for` maps a probe to its seed.
pub fn probe_sweep(
    backbone: &Sequential<f32>,
    inputs: &SweepInputs<'_>,
    cfg: &ProbeConfig,
    seed_for: impl Fn(&ProbeSpec) -> u64,
) -> Result<SweepResult> {
    let hash = backbone.param_hash();
    let blocks = backbone.block_ends().len();
    let mut rows = Vec::new();
    let mut probes = Vec::new();
    for block in 1..=blocks {
        let tr = tap_samples(backbone, &inputs.train.inputs, block)?;
        let va = tap_samples(backbone, &inputs.val.inputs, block)?;
        let te = tap_samples(backbone, &inputs.in_test.inputs, block)?;
        let cr = tap_samples(backbone, &inputs.cross_test.inputs, block)?;
        for kind in [ProbeHead::Lin, ProbeHead::ConvLin] {
            let spec = ProbeSpec {
                attach_after_block: block,
                kind,
                conv_channels: cfg.conv_channels,
            };
            let probe = train_probe_on_taps(backbone, spec, &tr, &va, cfg, seed_for(&spec))?;
            let id = spec.model_id();
            let in_eval = evaluate_samples(&id, &inputs.in_test.split, &inputs.in_test.domain_id, inputs.in_test.scored(predict(&probe.head, &te)?), inputs.max_discard, inputs.config_hash)?;
            let cross_eval = evaluate_samples(&id, &inputs.cross_test.split, &inputs.cross_test.domain_id, inputs.cross_test.scored(predict(&probe.head, &cr)?), inputs.max_discard, inputs.config_hash)?;
            let best = probe.history.best();
            rows.push(SweepRow {
                model_id: id,
                block: Some(block),
                kind: kind.as_str().into(),
                trainable_params: probe.head.param_count(),
                in_domain: in_eval.report,
                cross_domain: cross_eval.report,
                epochs: probe.history.epochs.len(),
                best_val_mse: best.map(|b| b.val_mse),
            });
            probes.push(probe);
        }
    }
    let id = "full";
    let in_eval = evaluate_samples(id, &inputs.in_test.split, &inputs.in_test.domain_id, inputs.in_test.scored(predict(backbone, &inputs.in_test.inputs)?), inputs.max_discard, inputs.config_hash)?;
    let cross_eval = evaluate_samples(id, &inputs.cross_test.split, &inputs.cross_test.domain_id, inputs.cross_test.scored(predict(backbone, &inputs.cross_test.inputs)?), inputs.max_discard, inputs.config_hash)?;
    rows.push(SweepRow {
        model_id: id.into(),
        block: None,
        kind: "full".into(),
        trainable_params: backbone.param_count(),
        in_domain: in_eval.report,
        cross_domain: cross_eval.report,
        epochs: 0,
        best_val_mse: None,
    });
    if backbone.param_hash() != hash {
        return Err(Error::Numeric("backbone changed during the probe sweep".into()));
    }
    Ok(SweepResult {
        rows,
        backbone_sha256: hash,
        probes,
    })
}

/// One row per probe plus the full network.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "model_id,block,kind,trainable_params,in_fnmr_delta,in_isrr_delta,cross_fnmr_delta,cross_isrr_delta,epochs\n",
    );
    for r in rows {
        let block = r.block.map(|b| b.to_string()).unwrap_or_else(|| "all".into());
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
            r.model_id,
            block,
            r.kind,
            r.trainable_params,
            r.in_domain.fnmr_delta,
            r.in_domain.isrr_delta,
            r.cross_domain.fnmr_delta,
            r.cross_domain.isrr_delta,
            r.epochs
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::gray_from_fn;
    use tinycnn::{cnn3x32, CnnSpec};

    fn backbone() -> Sequential<f32> {
        cnn3x32(
            CnnSpec {
                input_size: 16,
                channels: 32,
                hidden: 4,
            },
            2,
        )
    }

    fn set(split: &str, n: usize, offset: usize) -> NetSet {
        let mut s = NetSet::new(split, "A", 16);
        for i in 0..n {
            let k = i + offset;
            let img = gray_from_fn(16, 16, |x, y| ((x * (k % 5 + 1) + y * 3) % 256) as u8);
            let score = (k % 7) as f64 / 7.0;
            let id = format!("f{k}");
            let label = QualityLabel::from_score(score, 0.4);
            s.push(&FrameView { frame_id: &id, image: &img }, score, label);
        }
        s
    }

    #[test]
    fn head_parameter_counts() {
        let b = backbone();
        let lin = ProbeSpec { attach_after_block: 3, kind: ProbeHead::Lin, conv_channels: 16 };
        let conv = ProbeSpec { kind: ProbeHead::ConvLin, ..lin };
        assert_eq!(probe_head::<f32>([2, 2, 32], lin.tinycnn_kind(), 0).param_count(), 33);
        assert_eq!(probe_head::<f32>([2, 2, 32], conv.tinycnn_kind(), 0).param_count(), 32 * 16 + 16 + 16 + 1);
        assert!(check_block(&b, 0).is_err());
        assert!(check_block(&b, 4).is_err());
    }

    #[test]
    fn probe_training_leaves_the_backbone_untouched() {
        let b = backbone();
        let hash = b.param_hash();
        let cfg = ProbeConfig { max_epochs: 3, patience: 1, ..ProbeConfig::default() };
        let spec = ProbeSpec { attach_after_block: 2, kind: ProbeHead::ConvLin, conv_channels: 4 };
        let p = train_probe(&b, spec, &set("train", 12, 0).inputs, &set("val", 4, 20).inputs, &cfg, 1).unwrap();
        assert_eq!(b.param_hash(), hash);
        assert_eq!(p.backbone_sha256, hash);
    }

    #[test]
    fn sweep_has_seven_rows() {
        let b = backbone();
        let (tr, va, te, cr) = (set("train", 12, 0), set("val", 6, 20), set("test", 8, 40), set("cross", 8, 60));
        let cfg = ProbeConfig { max_epochs: 2, patience: 1, conv_channels: 4, ..ProbeConfig::default() };
        let inputs = SweepInputs { train: &tr, val: &va, in_test: &te, cross_test: &cr, max_discard: 0.7, config_hash: "h" };
        let r = probe_sweep(&b, &inputs, &cfg, |s| s.attach_after_block as u64).unwrap();
        assert_eq!(r.rows.len(), 7);
        assert_eq!(sweep_csv(&r.rows).lines().count(), 8);
        for row in &r.rows {
            assert!(row.in_domain.fnmr_delta >= -1e-9 || row.in_domain.n_low == 0);
        }
    }

    #[test]
    fn scorer_matches_batched_prediction() {
        let b = backbone();
        let s = set("test", 3, 0);
        let head = probe_head::<f32>([4, 4, 32], ProbeKind::Linear, 3);
        let taps = tap_samples(&b, &s.inputs, 2).unwrap();
        let batched = predict(&head, &taps).unwrap();
        let scorer = ProbeScorer { model_id: "p".into(), backbone: b, block: 2, head };
        let img = gray_from_fn(16, 16, |x, y| ((x + y * 3) % 256) as u8);
        let single = scorer.score(&FrameView { frame_id: "f0", image: &img }).unwrap();
        assert!((single - batched[0]).abs() < 1e-6);
    }
}
