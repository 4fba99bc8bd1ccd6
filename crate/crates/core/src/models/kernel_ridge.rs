//! RBF kernel ridge regression on standardized features, with (λ, γ) picked
//! on a validation split.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::features::{extract, Crop, FeatureKind};
use crate::models::{FrameView, ModelArtifact, ModelKind, QualityScorer, Standardization};

#[derive(Clone, Debug, PartialEq)]
pub struct KernelRidgeModel {
    /// Standardized training features, one row per support point.
    pub support: Vec<Vec<f64>>,
    pub dual_weights: Vec<f64>,
    pub rbf_gamma: f64,
    pub ridge_lambda: f64,
    pub standardization: Standardization,
    pub val_mse: f64,
    /// Grid points whose system was not positive-definite.
    pub skipped: Vec<(f64, f64)>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel_matrix(rows: &[Vec<f64>], gamma: f64) -> DMatrix<f64> {
    let n = rows.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = (-gamma * sq_dist(&rows[i], &rows[j])).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

impl KernelRidgeModel {
    /// Prediction for an already standardized vector.
    pub fn predict_standardized(&self, z: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.dual_weights)
            .map(|(s, w)| w * (-self.rbf_gamma * sq_dist(s, z)).exp())
            .sum()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_standardized(&self.standardization.apply(x))
    }

    /// Relative residual `‖(K + λI)w − y‖ / ‖y‖` against the given targets.
    pub fn residual(&self, targets: &[f64]) -> f64 {
        let mut k = kernel_matrix(&self.support, self.rbf_gamma);
        for i in 0..k.nrows() {
            k[(i, i)] += self.ridge_lambda;
        }
        let r = k * DVector::from_column_slice(&self.dual_weights) - DVector::from_column_slice(targets);
        r.norm() / DVector::from_column_slice(targets).norm().max(1e-300)
    }
}

/// Solves `(K + λI) w = y` by Cholesky for every grid pair and keeps the one
/// with the lowest validation MSE (first in grid order on ties).
pub fn fit_kernel_ridge(
    features: &[Vec<f64>],
    targets: &[f64],
    lambda_grid: &[f64],
    gamma_grid: &[f64],
    val_features: &[Vec<f64>],
    val_targets: &[f64],
) -> Result<KernelRidgeModel> {
    if features.is_empty() || features.len() != targets.len() {
        return Err(Error::InvalidArgument("kernel ridge needs one target per training row".into()));
    }
    if val_features.is_empty() || val_features.len() != val_targets.len() {
        return Err(Error::InvalidArgument("kernel ridge needs one target per validation row".into()));
    }
    let standardization = Standardization::fit(features);
    let support: Vec<Vec<f64>> = features.iter().map(|r| standardization.apply(r)).collect();
    let val: Vec<Vec<f64>> = val_features.iter().map(|r| standardization.apply(r)).collect();
    let y = DVector::from_column_slice(targets);
    let mut best: Option<KernelRidgeModel> = None;
    let mut skipped = Vec::new();
    for &gamma in gamma_grid {
        let k = kernel_matrix(&support, gamma);
        let kv = DMatrix::from_fn(val.len(), support.len(), |i, j| (-gamma * sq_dist(&val[i], &support[j])).exp());
        for &lambda in lambda_grid {
            let mut a = k.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda;
            }
            let Some(chol) = Cholesky::new(a) else {
                skipped.push((lambda, gamma));
                continue;
            };
            let w = chol.solve(&y);
            let pred = &kv * &w;
            let mse = pred.iter().zip(val_targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / val_targets.len() as f64;
            if best.as_ref().is_none_or(|b| mse < b.val_mse) {
                best = Some(KernelRidgeModel {
                    support: support.clone(),
                    dual_weights: w.iter().copied().collect(),
                    rbf_gamma: gamma,
                    ridge_lambda: lambda,
                    standardization: standardization.clone(),
                    val_mse: mse,
                    skipped: Vec::new(),
                });
            }
        }
    }
    let mut model = best.ok_or_else(|| Error::Numeric("no kernel ridge grid point was solvable".into()))?;
    model.skipped = skipped;
    let residual = model.residual(targets);
    if !(residual <= 1e-6) {
        return Err(Error::Numeric(format!("kernel ridge residual {residual:e} exceeds 1e-6")));
    }
    Ok(model)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedScorer {
    pub model_id: String,
    pub feature_kind: FeatureKind,
    pub crop: Option<Crop>,
    pub model: KernelRidgeModel,
}

impl SupervisedScorer {
    pub fn to_artifact(&self, config_hash: &str) -> ModelArtifact {
        let m = &self.model;
        let mut a = ModelArtifact::new(&self.model_id, ModelKind::KernelRidge, config_hash);
        a.feature_kind = Some(self.feature_kind);
        a.crop = self.crop;
        a.hyperparameters.insert("rbf_gamma".into(), json!(m.rbf_gamma));
        a.hyperparameters.insert("ridge_lambda".into(), json!(m.ridge_lambda));
        a.hyperparameters.insert("n_support".into(), json!(m.support.len()));
        a.standardization = Some(m.standardization.clone());
        a.arrays.insert("support_features".into(), m.support.iter().flatten().copied().collect());
        a.arrays.insert("dual_weights".into(), m.dual_weights.clone());
        a.metadata.insert("val_mse".into(), json!(m.val_mse));
        a.metadata.insert("skipped_grid_points".into(), json!(m.skipped));
        a
    }

    pub fn from_artifact(a: &ModelArtifact) -> Result<Self> {
        let feature_kind = a.feature_kind()?;
        let d = feature_kind.dim();
        let n = a.hyper_u64("n_support")? as usize;
        let flat = a.array("support_features")?;
        let w = a.array("dual_weights")?;
        let standardization = a
            .standardization
            .clone()
            .ok_or_else(|| Error::Data(format!("model {}: missing standardization", a.model_id)))?;
        if flat.len() != n * d || w.len() != n || standardization.mean.len() != d || standardization.std.len() != d {
            return Err(Error::Data(format!("model {}: array sizes are inconsistent", a.model_id)));
        }
        let gamma = a.hyper_f64("rbf_gamma")?;
        let lambda = a.hyper_f64("ridge_lambda")?;
        if !(gamma > 0.0 && lambda > 0.0) || standardization.std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Data(format!("model {}: invalid hyperparameters", a.model_id)));
        }
        Ok(Self {
            model_id: a.model_id.clone(),
            feature_kind,
            crop: a.crop,
            model: KernelRidgeModel {
                support: flat.chunks(d).map(<[f64]>::to_vec).collect(),
                dual_weights: w.to_vec(),
                rbf_gamma: gamma,
                ridge_lambda: lambda,
                standardization,
                val_mse: a.metadata.get("val_mse").and_then(|v| v.as_f64()).unwrap_or(f64::NAN),
                skipped: Vec::new(),
            },
        })
    }
}

impl QualityScorer for SupervisedScorer {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn score(&self, frame: &FrameView<'_>) -> Result<f64> {
        let f = extract(self.feature_kind, frame.frame_id, frame.image, self.crop)?;
        Ok(self.model.predict(&f.values))
    }
}
