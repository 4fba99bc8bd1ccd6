//! The scorer ladder behind one no-reference interface: frame in, q out,
//! higher meaning a better predicted oracle score.

pub mod cnn;
pub mod heuristics;
pub mod kernel_ridge;
pub mod mvg;

use std::collections::BTreeMap;
use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::features::{Crop, FeatureKind};
use crate::io;

pub use cnn::CnnScorer;
pub use heuristics::{blur_breakdown, sharpness_score, BlurBreakdown, BlurScorer, RandomScorer, SharpnessScorer};
pub use kernel_ridge::{fit_kernel_ridge, KernelRidgeModel, SupervisedScorer};
pub use mvg::{fit_mvg, mahalanobis, Epsilon, MvgModel, NiqeScorer};

/// What a scorer may see of a frame: its id and pixels, never the reference.
#[derive(Clone, Copy, Debug)]
pub struct FrameView<'a> {
    pub frame_id: &'a str,
    pub image: &'a GrayImage,
}

pub trait QualityScorer: Send + Sync {
    fn model_id(&self) -> &str;
    fn score(&self, frame: &FrameView<'_>) -> Result<f64>;
    fn metadata(&self) -> Value {
        Value::Null
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Random,
    Sharpness,
    Blur,
    Mvg,
    KernelRidge,
    Cnn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Per-dimension mean and population std; a zero std is stored as 1.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// One JSON document per trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub model_id: String,
    pub kind: ModelKind,
    pub feature_kind: Option<FeatureKind>,
    pub crop: Option<Crop>,
    pub hyperparameters: BTreeMap<String, Value>,
    pub standardization: Option<Standardization>,
    pub arrays: BTreeMap<String, Vec<f64>>,
    pub metadata: BTreeMap<String, Value>,
    pub config_hash: String,
}

impl ModelArtifact {
    pub fn new(model_id: &str, kind: ModelKind, config_hash: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            kind,
            feature_kind: None,
            crop: None,
            hyperparameters: BTreeMap::new(),
            standardization: None,
            arrays: BTreeMap::new(),
            metadata: BTreeMap::new(),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn hyper_f64(&self, key: &str) -> Result<f64> {
        self.hyperparameters
            .get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Data(format!("model {}: missing hyperparameter {key}", self.model_id)))
    }

    pub fn hyper_u64(&self, key: &str) -> Result<u64> {
        self.hyperparameters
            .get(key)
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Data(format!("model {}: missing hyperparameter {key}", self.model_id)))
    }

    pub fn array(&self, key: &str) -> Result<&[f64]> {
        self.arrays
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Data(format!("model {}: missing array {key}", self.model_id)))
    }

    pub fn feature_kind(&self) -> Result<FeatureKind> {
        self.feature_kind
            .ok_or_else(|| Error::Data(format!("model {}: missing feature_kind", self.model_id)))
    }

    pub fn to_json(&self) -> String {
        io::to_json_pretty(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    /// Rebuilds the scorer, validating the stored invariants. `dir` resolves
    /// relative side files such as CNN checkpoints.
    pub fn to_scorer(&self, dir: &Path) -> Result<Box<dyn QualityScorer>> {
        Ok(match self.kind {
            ModelKind::Random => Box::new(RandomScorer::from_artifact(self)?),
            ModelKind::Sharpness => Box::new(SharpnessScorer::from_artifact(self)?),
            ModelKind::Blur => Box::new(BlurScorer::from_artifact(self)?),
            ModelKind::Mvg => Box::new(NiqeScorer::from_artifact(self)?),
            ModelKind::KernelRidge => Box::new(SupervisedScorer::from_artifact(self)?),
            ModelKind::Cnn => Box::new(CnnScorer::from_artifact(self, dir)?),
        })
    }
}

/// Scores frames in order; results do not depend on batching.
pub fn score_all(scorer: &dyn QualityScorer, frames: &[FrameView<'_>]) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    frames.par_iter().map(|f| scorer.score(f)).collect()
}
