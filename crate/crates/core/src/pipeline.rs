//! End-to-end orchestration over a run directory laid out as
//! `<run>/{dataset, labels, models, reports}`.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tinycnn::{checkpoint, Sequential};

use crate::capture::{DomainId, TrajectoryKind};
use crate::config::{hex, PipelineConfig, ALL_MODEL_IDS};
use crate::dataset::{build_dataset, Dataset, DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_model, write_evaluation, Evaluation, PaucReport};
use crate::features::{extract, Crop, FeatureKind};
use crate::gatekeeper::{timeline_csv, timeline_from_scores, timeline_svg, GateConfig, GatePolicy, SessionTimeline};
use crate::graphic::sg_region_for;
use crate::io;
use crate::labels::{label_dataset, read_labels, write_labels, LabelSet};
use crate::models::cnn::{samples_from, train_cnn, CnnScorer};
use crate::models::{
    fit_kernel_ridge, fit_mvg, score_all, BlurScorer, Epsilon, FrameView, ModelArtifact, NiqeScorer, QualityScorer,
    RandomScorer, SharpnessScorer, SupervisedScorer,
};
use crate::probe::{probe_sweep, sweep_csv, NetSet, SweepInputs, SweepResult};
use crate::seed;
use crate::stats::spearman;

pub const LOCK_FILE: &str = ".sgq.lock";

#[derive(Clone, Debug)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn labels(&self) -> PathBuf {
        self.root.join("labels")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn eval_reports(&self) -> PathBuf {
        self.reports().join("eval")
    }
}

/// Labels live next to the dataset directory, in `<run>/labels`.
pub fn labels_dir_for(dataset_dir: &Path) -> PathBuf {
    dataset_dir.parent().unwrap_or(Path::new(".")).join("labels")
}

/// Exclusive guard over an output directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        io::ensure_dir(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Data(format!(
                "{} is locked by another run ({}); remove the file if that run is gone",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn gen(cfg: &PipelineConfig, dataset_dir: &Path) -> Result<DatasetManifest> {
    build_dataset(cfg, dataset_dir)
}

pub fn label(dataset_dir: &Path, labels_dir: &Path) -> Result<LabelSet> {
    let ds = Dataset::open(dataset_dir)?;
    let labels = label_dataset(&ds, ds.config.oracle.tau_policy)?;
    io::ensure_dir(labels_dir)?;
    write_labels(labels_dir, &ds, &labels)?;
    Ok(labels)
}

/// Opens a dataset with its labels, refusing labels made from another config.
pub fn open_labeled(dataset_dir: &Path, labels_dir: &Path) -> Result<(Dataset, LabelSet)> {
    let ds = Dataset::open(dataset_dir)?;
    let labels = read_labels(labels_dir)?;
    if labels.meta.config_hash != ds.config_hash() {
        return Err(Error::Data(format!(
            "labels in {} were produced for config {} but the dataset is {}",
            labels_dir.display(),
            labels.meta.config_hash,
            ds.config_hash()
        )));
    }
    Ok((ds, labels))
}

/// Images of one domain and split, in manifest order.
pub struct LoadedSplit {
    pub entries: Vec<ManifestEntry>,
    pub images: Vec<GrayImage>,
}

impl LoadedSplit {
    pub fn load(ds: &Dataset, domain: DomainId, split: Split) -> Result<Self> {
        let entries: Vec<ManifestEntry> = ds.entries(domain, split).into_iter().cloned().collect();
        if entries.is_empty() {
            return Err(Error::Data(format!("dataset has no {split:?} frames for {}", domain.as_str())));
        }
        let images = entries.par_iter().map(|e| ds.load_image(e)).collect::<Result<Vec<_>>>()?;
        Ok(Self { entries, images })
    }

    pub fn views(&self) -> Vec<FrameView<'_>> {
        self.entries
            .iter()
            .zip(&self.images)
            .map(|(e, img)| FrameView {
                frame_id: &e.frame_id,
                image: img,
            })
            .collect()
    }

    pub fn scores(&self, labels: &LabelSet) -> Result<Vec<f64>> {
        self.entries.iter().map(|e| Ok(labels.get(&e.frame_id)?.s)).collect()
    }

    pub fn net_set(&self, labels: &LabelSet, split: &str, domain: DomainId, size: usize) -> Result<NetSet> {
        let mut set = NetSet::new(split, domain.as_str(), size);
        for v in self.views() {
            let l = labels.get(v.frame_id)?;
            set.push(&v, l.s, l.label);
        }
        Ok(set)
    }
}

pub fn feature_crop(cfg: &PipelineConfig) -> Option<Crop> {
    let r = sg_region_for(cfg.dataset.grid_cells);
    let c = cfg.dataset.cell_size_px;
    Crop::for_region(cfg.features.region, (r.x * c, r.y * c, r.width * c, r.height * c))
}

fn feature_rows(kind: FeatureKind, split: &LoadedSplit, crop: Option<Crop>) -> Result<Vec<Vec<f64>>> {
    split
        .views()
        .par_iter()
        .map(|v| extract(kind, v.frame_id, v.image, crop).map(|f| f.values))
        .collect()
}

fn pairs<'a>(split: &'a LoadedSplit, labels: &LabelSet) -> Result<Vec<(&'a GrayImage, f64)>> {
    Ok(split.images.iter().zip(split.scores(labels)?).collect())
}

fn feature_kind_of(model_id: &str) -> FeatureKind {
    if model_id.contains("lbp") {
        FeatureKind::Lbp10
    } else {
        FeatureKind::Brisque36
    }
}

/// Fits one model of the ladder on the in-domain train (and val) split and
/// writes `<models_dir>/<model_id>.json`, plus a checkpoint for the CNN.
pub fn train_model(ds: &Dataset, labels: &LabelSet, model_id: &str, models_dir: &Path) -> Result<ModelArtifact> {
    let cfg = &ds.config;
    let m = &cfg.models;
    let hash = ds.config_hash();
    let root = cfg.dataset.seed;
    let domain = ds.primary_domain();
    io::ensure_dir(models_dir)?;
    let artifact = match model_id {
        "random" => RandomScorer::new(model_id, seed::derive(root, "model/random")).to_artifact(hash),
        "sharpness" => SharpnessScorer::new(model_id).to_artifact(hash),
        "blur" => BlurScorer::new(model_id, cfg.dataset.cell_size_px, m.blur.band_fraction)?.to_artifact(hash),
        "niqe-sg" | "niqe-lbp-sg" => {
            let kind = feature_kind_of(model_id);
            let crop = feature_crop(cfg);
            let train = LoadedSplit::load(ds, domain, Split::Train)?;
            let s = train.scores(labels)?;
            let rows = feature_rows(kind, &train, crop)?;
            let pristine: Vec<Vec<f64>> = rows
                .into_iter()
                .zip(&s)
                .filter(|(_, &s)| s > m.mvg.cutoff)
                .map(|(r, _)| r)
                .collect();
            let model = fit_mvg(&pristine, Epsilon::Relative(m.mvg.epsilon_rel)).map_err(|e| match e {
                Error::Data(msg) => Error::Data(format!("{model_id}: {msg} (oracle cutoff {})", m.mvg.cutoff)),
                other => other,
            })?;
            NiqeScorer {
                model_id: model_id.to_string(),
                feature_kind: kind,
                crop,
                model,
                cutoff: m.mvg.cutoff,
            }
            .to_artifact(hash)
        }
        "brisque-sgm" | "lbp-sgm" => {
            let kind = feature_kind_of(model_id);
            let crop = feature_crop(cfg);
            let train = LoadedSplit::load(ds, domain, Split::Train)?;
            let val = LoadedSplit::load(ds, domain, Split::Val)?;
            let model = fit_kernel_ridge(
                &feature_rows(kind, &train, crop)?,
                &train.scores(labels)?,
                &m.kernel_ridge.lambda_grid,
                &m.kernel_ridge.gamma_grid,
                &feature_rows(kind, &val, crop)?,
                &val.scores(labels)?,
            )?;
            SupervisedScorer {
                model_id: model_id.to_string(),
                feature_kind: kind,
                crop,
                model,
            }
            .to_artifact(hash)
        }
        "cnn3x32-sgm" => {
            let size = m.cnn.input_size;
            let train = LoadedSplit::load(ds, domain, Split::Train)?;
            let val = LoadedSplit::load(ds, domain, Split::Val)?;
            let tr = samples_from(&pairs(&train, labels)?, size);
            let va = samples_from(&pairs(&val, labels)?, size);
            let (net, history) = train_cnn(&tr, &va, &m.cnn, seed::derive(root, "model/cnn3x32-sgm"))?;
            io::write_text(&models_dir.join(format!("{model_id}.history.csv")), &history.to_csv())?;
            CnnScorer::new(model_id, net).save(models_dir, hash, Some(&history))?
        }
        other => return Err(Error::Config(format!("unknown model id {other:?}"))),
    };
    artifact.save(&models_dir.join(format!("{model_id}.json")))?;
    Ok(artifact)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    /// In-domain test split.
    Test,
    /// Test split of the cross domain.
    Cross,
}

impl EvalSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Test => "test",
            Self::Cross => "cross",
        }
    }

    pub fn domain(self, ds: &Dataset) -> Result<DomainId> {
        match self {
            Self::Test => Ok(ds.primary_domain()),
            Self::Cross => ds
                .cross_domain()
                .ok_or_else(|| Error::Data("dataset has no cross domain; add a second entry to dataset.domains".into())),
        }
    }
}

pub fn check_artifact_hash(a: &ModelArtifact, ds: &Dataset, force: bool) -> Result<()> {
    if !force && a.config_hash != ds.config_hash() {
        return Err(Error::Data(format!(
            "model {} was trained under config {} but the dataset is {}; pass --force to evaluate anyway",
            a.model_id,
            a.config_hash,
            ds.config_hash()
        )));
    }
    Ok(())
}

pub fn load_scorer(artifact_path: &Path) -> Result<(ModelArtifact, Box<dyn QualityScorer>)> {
    let a = ModelArtifact::load(artifact_path)?;
    let dir = artifact_path.parent().unwrap_or(Path::new("."));
    let scorer = a.to_scorer(dir)?;
    Ok((a, scorer))
}

/// Scores a split, writes `<id>.<split>.*` into `out_dir`.
pub fn eval(
    ds: &Dataset,
    labels: &LabelSet,
    artifact_path: &Path,
    split: EvalSplit,
    out_dir: &Path,
    force: bool,
) -> Result<Evaluation> {
    let (a, scorer) = load_scorer(artifact_path)?;
    check_artifact_hash(&a, ds, force)?;
    let domain = split.domain(ds)?;
    let frames = LoadedSplit::load(ds, domain, Split::Test)?;
    let e = evaluate_model(
        scorer.as_ref(),
        split.as_str(),
        domain.as_str(),
        &frames.views(),
        labels,
        ds.config.evaluation.pauc_max_discard,
    )?;
    io::ensure_dir(out_dir)?;
    write_evaluation(out_dir, &format!("{}.{}", a.model_id, split.as_str()), &e)?;
    Ok(e)
}

/// Accepts either a model artifact (`.json`) or a raw checkpoint.
pub fn load_backbone(path: &Path) -> Result<Sequential<f32>> {
    if path.extension().is_some_and(|e| e == "json") {
        let a = ModelArtifact::load(path)?;
        Ok(CnnScorer::from_artifact(&a, path.parent().unwrap_or(Path::new(".")))?.net)
    } else {
        Ok(checkpoint::load(path)?)
    }
}

/// Probe study on a frozen backbone. The cross-domain test set comes from
/// `cross` when given, otherwise from the dataset's own second domain.
pub fn probe_sweep_cmd(
    ds: &Dataset,
    labels: &LabelSet,
    cross: Option<(&Dataset, &LabelSet)>,
    backbone: &Sequential<f32>,
    out_dir: &Path,
) -> Result<SweepResult> {
    let cfg = &ds.config;
    let size = backbone.input_shape[0];
    let domain = ds.primary_domain();
    let (cds, clabels) = cross.unwrap_or((ds, labels));
    let cross_domain = if cross.is_some() && cds.primary_domain() != domain {
        cds.primary_domain()
    } else {
        EvalSplit::Cross.domain(cds)?
    };
    let train = LoadedSplit::load(ds, domain, Split::Train)?.net_set(labels, "train", domain, size)?;
    let val = LoadedSplit::load(ds, domain, Split::Val)?.net_set(labels, "val", domain, size)?;
    let in_test = LoadedSplit::load(ds, domain, Split::Test)?.net_set(labels, "test", domain, size)?;
    let cross_test =
        LoadedSplit::load(cds, cross_domain, Split::Test)?.net_set(clabels, "cross", cross_domain, size)?;
    let hash = ds.config_hash().to_string();
    let inputs = SweepInputs {
        train: &train,
        val: &val,
        in_test: &in_test,
        cross_test: &cross_test,
        max_discard: cfg.evaluation.pauc_max_discard,
        config_hash: &hash,
    };
    let root = cfg.dataset.seed;
    let result = probe_sweep(backbone, &inputs, &cfg.models.probe, |spec| {
        seed::derive(root, &format!("probe/{}", spec.model_id()))
    })?;
    let probes_dir = out_dir.join("probes");
    io::ensure_dir(&probes_dir)?;
    for p in &result.probes {
        checkpoint::save(&p.head, &probes_dir.join(format!("{}.sgnn", p.spec.model_id())))?;
        io::write_text(&probes_dir.join(format!("{}.history.csv", p.spec.model_id())), &p.history.to_csv())?;
    }
    io::write_text(&out_dir.join("probe_sweep.csv"), &sweep_csv(&result.rows))?;
    io::write_json(
        &out_dir.join("probe_sweep.json"),
        &serde_json::json!({
            "backbone_sha256": result.backbone_sha256,
            "note": "frozen-backbone probes on the in-repo CNN; an analog of the MobileNet study, not a replication",
            "rows": result.rows,
        }),
    )?;
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub trajectory_kind: TrajectoryKind,
    pub selected: Option<usize>,
    pub selected_s: Option<f64>,
    pub q_spread: f64,
    pub spearman_q_index: f64,
    pub spearman_s_index: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub model_id: String,
    pub sigma: f64,
    pub policy: GatePolicy,
    pub sessions: Vec<SessionSummary>,
    pub config_hash: String,
}

/// Replays every in-domain test session through the scorer.
pub fn stream_sim(
    ds: &Dataset,
    labels: &LabelSet,
    artifact_path: &Path,
    gate: GateConfig,
    out_dir: &Path,
) -> Result<(StreamReport, Vec<SessionTimeline>)> {
    let (a, scorer) = load_scorer(artifact_path)?;
    check_artifact_hash(&a, ds, false)?;
    let by_id: BTreeMap<&str, &ManifestEntry> =
        ds.manifest.entries.iter().map(|e| (e.frame_id.as_str(), e)).collect();
    let sessions: Vec<_> = ds
        .sessions
        .iter()
        .filter(|s| s.domain_id == ds.primary_domain() && s.split == Split::Test)
        .collect();
    let results = sessions
        .par_iter()
        .map(|sess| {
            let images = sess
                .frames
                .iter()
                .map(|f| {
                    let e = by_id
                        .get(f.frame_id.as_str())
                        .ok_or_else(|| Error::Data(format!("session frame {} is not in the manifest", f.frame_id)))?;
                    ds.load_image(e)
                })
                .collect::<Result<Vec<_>>>()?;
            let views: Vec<FrameView> = sess
                .frames
                .iter()
                .zip(&images)
                .map(|(f, img)| FrameView {
                    frame_id: &f.frame_id,
                    image: img,
                })
                .collect();
            let q = views.iter().map(|v| scorer.score(v)).collect::<Result<Vec<_>>>()?;
            let s = sess.frames.iter().map(|f| Ok(labels.get(&f.frame_id)?.s)).collect::<Result<Vec<_>>>()?;
            let ids = sess.frames.iter().map(|f| f.frame_id.clone()).collect();
            let t = timeline_from_scores(&sess.session_id, ids, &q, Some(&s), &gate)?;
            let index: Vec<f64> = (0..q.len()).map(|i| i as f64).collect();
            let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let summary = SessionSummary {
                session_id: sess.session_id.clone(),
                trajectory_kind: sess.trajectory_kind,
                selected: t.selected,
                selected_s: t.selected.map(|i| s[i]),
                q_spread: hi - lo,
                spearman_q_index: spearman(&q, &index),
                spearman_s_index: spearman(&s, &index),
            };
            Ok((summary, t))
        })
        .collect::<Result<Vec<_>>>()?;
    let (summaries, timelines): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let report = StreamReport {
        model_id: a.model_id.clone(),
        sigma: gate.sigma,
        policy: gate.policy,
        sessions: summaries,
        config_hash: ds.config_hash().to_string(),
    };
    io::ensure_dir(out_dir)?;
    io::write_text(&out_dir.join("timelines.csv"), &timeline_csv(&timelines))?;
    io::write_json(&out_dir.join("stream_summary.json"), &report)?;
    let svg_dir = out_dir.join("svg");
    io::ensure_dir(&svg_dir)?;
    for t in &timelines {
        io::write_text(&svg_dir.join(format!("{}.svg", t.session_id)), &timeline_svg(t, gate.sigma))?;
    }
    Ok((report, timelines))
}

pub fn default_gate(cfg: &PipelineConfig, labels: &LabelSet) -> GateConfig {
    GateConfig {
        sigma: cfg.gatekeeper.sigma.unwrap_or(labels.tau()),
        policy: cfg.gatekeeper.policy,
    }
}

/// Every `*.report.json` under `dir`, recursively, sorted by path.
pub fn collect_reports(dir: &Path) -> Result<Vec<PaucReport>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.to_string_lossy().ends_with(".report.json") {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    walk(dir, &mut paths)?;
    paths.sort();
    paths.iter().map(|p| io::read_json(p)).collect()
}

/// Rows are models (ladder order first), columns FNMR and ISRR ΔpAUC per
/// domain, in-domain first.
pub fn merged_table(reports: &[PaucReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Data("no evaluation reports found".into()));
    }
    let mut domains: Vec<(&str, &str)> = Vec::new();
    for r in reports {
        if !domains.iter().any(|&(_, d)| d == r.domain_id) {
            domains.push((r.split.as_str(), r.domain_id.as_str()));
        }
    }
    domains.sort_by_key(|&(split, d)| (split != "test", d.to_string()));
    let mut models: Vec<&str> = Vec::new();
    for id in ALL_MODEL_IDS {
        if reports.iter().any(|r| r.model_id == id) {
            models.push(id);
        }
    }
    let mut extra: Vec<&str> = reports
        .iter()
        .map(|r| r.model_id.as_str())
        .filter(|id| !ALL_MODEL_IDS.contains(id))
        .collect();
    extra.sort();
    extra.dedup();
    models.extend(extra);

    let mut out = String::from("model_id");
    for (_, d) in &domains {
        out.push_str(&format!(",{d}_fnmr_delta,{d}_isrr_delta"));
    }
    out.push('\n');
    for id in models {
        out.push_str(id);
        for (_, d) in &domains {
            match reports.iter().find(|r| r.model_id == id && r.domain_id == *d) {
                Some(r) => out.push_str(&format!(",{:.6},{:.6}", r.fnmr_delta, r.isrr_delta)),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn report(run_dir: &Path) -> Result<String> {
    let layout = RunLayout::new(run_dir);
    let dir = if layout.eval_reports().is_dir() {
        layout.eval_reports()
    } else {
        run_dir.to_path_buf()
    };
    let table = merged_table(&collect_reports(&dir)?)?;
    io::ensure_dir(&layout.reports())?;
    io::write_text(&layout.reports().join("table1.csv"), &table)?;
    Ok(table)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// The whole pipeline into `run_dir`. `log` receives one line per stage.
pub fn run_all(cfg: &PipelineConfig, run_dir: &Path, log: &dyn Fn(&str)) -> Result<Vec<StageTiming>> {
    cfg.validate()?;
    let _lock = RunLock::acquire(run_dir)?;
    let layout = RunLayout::new(run_dir);
    let mut timings = Vec::new();
    let stage = |name: &str, started: Instant, timings: &mut Vec<StageTiming>| {
        let seconds = started.elapsed().as_secs_f64();
        log(&format!("{name}: {seconds:.1}s"));
        timings.push(StageTiming {
            stage: name.to_string(),
            seconds,
        });
    };

    let t = Instant::now();
    gen(cfg, &layout.dataset())?;
    stage("gen", t, &mut timings);

    let t = Instant::now();
    label(&layout.dataset(), &layout.labels())?;
    stage("label", t, &mut timings);

    let (ds, labels) = open_labeled(&layout.dataset(), &layout.labels())?;
    for id in &cfg.models.ids {
        let t = Instant::now();
        train_model(&ds, &labels, id, &layout.models())?;
        stage(&format!("train {id}"), t, &mut timings);
    }

    let t = Instant::now();
    let mut splits = vec![EvalSplit::Test];
    if ds.cross_domain().is_some() {
        splits.push(EvalSplit::Cross);
    }
    for id in &cfg.models.ids {
        for &split in &splits {
            eval(&ds, &labels, &layout.models().join(format!("{id}.json")), split, &layout.eval_reports(), false)?;
        }
    }
    stage("eval", t, &mut timings);

    let cnn = layout.models().join("cnn3x32-sgm.json");
    if cnn.exists() {
        if ds.cross_domain().is_some() {
            let t = Instant::now();
            let backbone = load_backbone(&cnn)?;
            probe_sweep_cmd(&ds, &labels, None, &backbone, &layout.reports().join("probe_sweep"))?;
            stage("probe-sweep", t, &mut timings);
        }
        let t = Instant::now();
        stream_sim(&ds, &labels, &cnn, default_gate(cfg, &labels), &layout.reports().join("stream"))?;
        stage("stream-sim", t, &mut timings);
    }

    let t = Instant::now();
    report(run_dir)?;
    stage("report", t, &mut timings);
    io::write_json(&layout.reports().join("timings.json"), &timings)?;
    Ok(timings)
}

/// Scores of one split under a scorer, for callers that want raw q values.
pub fn score_split(scorer: &dyn QualityScorer, split: &LoadedSplit) -> Result<Vec<f64>> {
    score_all(scorer, &split.views())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(RunLock::acquire(dir.path()), Err(Error::Data(_))));
        drop(a);
        assert!(RunLock::acquire(dir.path()).is_ok());
    }

    fn report(model: &str, split: &str, domain: &str, delta: f64) -> PaucReport {
        PaucReport {
            model_id: model.into(),
            split: split.into(),
            domain_id: domain.into(),
            n_samples: 10,
            n_low: 4,
            range: [0.0, 0.7],
            fnmr_pauc: delta,
            isrr_pauc: delta,
            ideal_fnmr_pauc: 0.0,
            ideal_isrr_pauc: 0.0,
            fnmr_delta: delta,
            isrr_delta: delta,
            fnmr_pauc_raw: delta * 0.7,
            isrr_pauc_raw: delta * 0.7,
            ideal_fnmr_pauc_raw: 0.0,
            ideal_isrr_pauc_raw: 0.0,
            config_hash: "h".into(),
        }
    }

    #[test]
    fn merged_table_orders_models_and_domains() {
        let reports = vec![
            report("sharpness", "cross", "B", 0.2),
            report("random", "test", "A", 0.3),
            report("sharpness", "test", "A", 0.1),
            report("random", "cross", "B", 0.4),
        ];
        let t = merged_table(&reports).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "model_id,A_fnmr_delta,A_isrr_delta,B_fnmr_delta,B_isrr_delta");
        assert_eq!(lines[1], "random,0.300000,0.300000,0.400000,0.400000");
        assert_eq!(lines[2], "sharpness,0.100000,0.100000,0.200000,0.200000");
    }

    #[test]
    fn labels_sit_beside_the_dataset() {
        assert_eq!(labels_dir_for(Path::new("/runs/a/dataset")), PathBuf::from("/runs/a/labels"));
    }
}
