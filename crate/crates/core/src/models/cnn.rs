//! The end-to-end CNN scorer and its training entry point.

use std::path::Path;

use image::GrayImage;
use serde_json::json;
use tinycnn::{checkpoint, cnn3x32, train, AdamConfig, CnnSpec, History, Samples, Sequential, Tensor, TrainConfig};

use crate::config::CnnConfig;
use crate::error::{Error, Result};
use crate::models::{FrameView, ModelArtifact, ModelKind, QualityScorer};
use crate::raster::Plane;

/// Area-resampled to `size × size` and scaled to [0, 1].
pub fn cnn_input(img: &GrayImage, size: usize) -> Vec<f32> {
    let plane = Plane::from_gray(img);
    let resized = if plane.width == size && plane.height == size {
        plane
    } else {
        plane.resample_area(size, size)
    };
    resized.data.iter().map(|&v| (v / 255.0) as f32).collect()
}

pub fn samples_from(frames: &[(&GrayImage, f64)], size: usize) -> Samples<f32> {
    let mut s = Samples::new([size, size, 1]);
    for &(img, target) in frames {
        s.push(cnn_input(img, size), target as f32);
    }
    s
}

pub fn spec_of(cfg: &CnnConfig) -> CnnSpec {
    CnnSpec {
        input_size: cfg.input_size,
        channels: cfg.channels,
        hidden: cfg.hidden,
    }
}

pub fn train_config(cfg: &CnnConfig, seed: u64) -> TrainConfig {
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

/// MSE regression of the oracle score with Adam and early stopping on the
/// validation split.
pub fn train_cnn(
    train_set: &Samples<f32>,
    val_set: &Samples<f32>,
    cfg: &CnnConfig,
    seed: u64,
) -> Result<(Sequential<f32>, History)> {
    let mut net = cnn3x32::<f32>(spec_of(cfg), seed);
    let history = train(&mut net, train_set, val_set, &train_config(cfg, seed))?;
    Ok((net, history))
}

#[derive(Clone, Debug)]
pub struct CnnScorer {
    pub model_id: String,
    pub net: Sequential<f32>,
    pub input_size: usize,
}

impl CnnScorer {
    pub fn new(model_id: &str, net: Sequential<f32>) -> Self {
        let input_size = net.input_shape[0];
        Self {
            model_id: model_id.to_string(),
            net,
            input_size,
        }
    }

    pub fn predict_input(&self, input: Vec<f32>) -> Result<f64> {
        let x = Tensor::from_vec(&[1, self.input_size, self.input_size, 1], input);
        Ok(f64::from(self.net.forward(&x)?.data()[0]))
    }

    /// Writes `<dir>/<model_id>.sgnn` (plus its JSON twin) and returns the
    /// artifact pointing at it.
    pub fn save(&self, dir: &Path, config_hash: &str, history: Option<&History>) -> Result<ModelArtifact> {
        let file = format!("{}.sgnn", self.model_id);
        checkpoint::save(&self.net, &dir.join(&file))?;
        let mut a = ModelArtifact::new(&self.model_id, ModelKind::Cnn, config_hash);
        a.hyperparameters.insert("input_size".into(), json!(self.input_size));
        a.hyperparameters.insert("param_count".into(), json!(self.net.param_count()));
        a.metadata.insert("checkpoint".into(), json!(file));
        a.metadata.insert("param_sha256".into(), json!(self.net.param_hash()));
        if let Some(h) = history {
            let best = h.best();
            a.metadata.insert("epochs".into(), json!(h.epochs.len()));
            a.metadata.insert("best_epoch".into(), json!(best.map(|b| b.epoch)));
            a.metadata.insert("best_val_mse".into(), json!(best.map(|b| b.val_mse)));
        }
        Ok(a)
    }

    pub fn from_artifact(a: &ModelArtifact, dir: &Path) -> Result<Self> {
        let file = a
            .metadata
            .get("checkpoint")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Data(format!("model {}: missing checkpoint reference", a.model_id)))?;
        let net = checkpoint::load(&dir.join(file))?;
        let expected = a.metadata.get("param_sha256").and_then(|v| v.as_str());
        if expected != Some(net.param_hash().as_str()) {
            return Err(Error::Data(format!("model {}: checkpoint hash does not match artifact", a.model_id)));
        }
        let scorer = Self::new(&a.model_id, net);
        if scorer.input_size as u64 != a.hyper_u64("input_size")? {
            return Err(Error::Data(format!("model {}: input size mismatch", a.model_id)));
        }
        Ok(scorer)
    }
}

impl QualityScorer for CnnScorer {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn score(&self, frame: &FrameView<'_>) -> Result<f64> {
        self.predict_input(cnn_input(frame.image, self.input_size))
    }
}
