//! Multivariate Gaussian of pristine-frame features and the Mahalanobis
//! distance to it.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::features::{extract, Crop, FeatureKind};
use crate::models::{FrameView, ModelArtifact, ModelKind, QualityScorer};

/// Ridge added to the covariance diagonal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Epsilon {
    /// `rel · trace(Σ) / d`.
    Relative(f64),
    Absolute(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MvgModel {
    pub mu: Vec<f64>,
    /// Row-major inverse of `Σ + εI`.
    pub cov_reg_inv: Vec<f64>,
    pub epsilon: f64,
    pub n_reference: usize,
}

impl MvgModel {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn inverse_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.cov_reg_inv)
    }

    /// Checks the stored inverse is symmetric positive-definite.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.cov_reg_inv.len() != d * d || self.cov_reg_inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("mvg inverse has the wrong size or non-finite entries".into()));
        }
        let m = self.inverse_matrix();
        let scale = m.amax().max(1e-300);
        if (&m - m.transpose()).amax() > 1e-9 * scale {
            return Err(Error::Data("mvg inverse is not symmetric".into()));
        }
        if Cholesky::new(m).is_none() {
            return Err(Error::Data("mvg inverse is not positive-definite".into()));
        }
        Ok(())
    }
}

/// Sample mean and (n−1)-normalized covariance, regularized and inverted
/// through a Cholesky factorization.
pub fn fit_mvg(rows: &[Vec<f64>], epsilon: Epsilon) -> Result<MvgModel> {
    let d = rows.first().map_or(0, Vec::len);
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument("mvg fit needs equal-length, non-empty vectors".into()));
    }
    if rows.len() < d + 1 {
        return Err(Error::Data(format!(
            "mvg fit needs at least {} reference frames, got {}; lower the quality cutoff",
            d + 1,
            rows.len()
        )));
    }
    let n = rows.len() as f64;
    let mu: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        let c = DVector::from_iterator(d, r.iter().zip(&mu).map(|(v, m)| v - m));
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;
    let eps = match epsilon {
        Epsilon::Relative(rel) => rel * cov.trace() / d as f64,
        Epsilon::Absolute(e) => e,
    };
    for i in 0..d {
        cov[(i, i)] += eps;
    }
    let chol = Cholesky::new(cov).ok_or(Error::DegenerateVariance("mvg covariance (not positive-definite)"))?;
    let inv = chol.inverse();
    let sym = (&inv + inv.transpose()) * 0.5;
    let mut cov_reg_inv = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            cov_reg_inv.push(sym[(i, j)]);
        }
    }
    Ok(MvgModel {
        mu,
        cov_reg_inv,
        epsilon: eps,
        n_reference: rows.len(),
    })
}

/// `√((f−μ)ᵀ Σ_reg⁻¹ (f−μ))`.
pub fn mahalanobis(model: &MvgModel, f: &[f64]) -> f64 {
    let d = model.dim();
    let diff: Vec<f64> = f.iter().zip(&model.mu).map(|(a, b)| a - b).collect();
    let mut acc = 0.0;
    for i in 0..d {
        let row = &model.cov_reg_inv[i * d..(i + 1) * d];
        let dot: f64 = row.iter().zip(&diff).map(|(a, b)| a * b).sum();
        acc += diff[i] * dot;
    }
    acc.max(0.0).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiqeScorer {
    pub model_id: String,
    pub feature_kind: FeatureKind,
    pub crop: Option<Crop>,
    pub model: MvgModel,
    pub cutoff: f64,
}

impl NiqeScorer {
    pub fn distance(&self, features: &[f64]) -> f64 {
        mahalanobis(&self.model, features)
    }

    pub fn to_artifact(&self, config_hash: &str) -> ModelArtifact {
        let mut a = ModelArtifact::new(&self.model_id, ModelKind::Mvg, config_hash);
        a.feature_kind = Some(self.feature_kind);
        a.crop = self.crop;
        a.hyperparameters.insert("epsilon".into(), json!(self.model.epsilon));
        a.hyperparameters.insert("cutoff".into(), json!(self.cutoff));
        a.hyperparameters.insert("n_reference".into(), json!(self.model.n_reference));
        a.arrays.insert("mu".into(), self.model.mu.clone());
        a.arrays.insert("cov_reg_inv".into(), self.model.cov_reg_inv.clone());
        a
    }

    pub fn from_artifact(a: &ModelArtifact) -> Result<Self> {
        let model = MvgModel {
            mu: a.array("mu")?.to_vec(),
            cov_reg_inv: a.array("cov_reg_inv")?.to_vec(),
            epsilon: a.hyper_f64("epsilon")?,
            n_reference: a.hyper_u64("n_reference")? as usize,
        };
        model.validate()?;
        let feature_kind = a.feature_kind()?;
        if model.dim() != feature_kind.dim() {
            return Err(Error::Data(format!("model {}: mu length does not match {feature_kind:?}", a.model_id)));
        }
        Ok(Self {
            model_id: a.model_id.clone(),
            feature_kind,
            crop: a.crop,
            model,
            cutoff: a.hyper_f64("cutoff")?,
        })
    }
}

impl QualityScorer for NiqeScorer {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn score(&self, frame: &FrameView<'_>) -> Result<f64> {
        let f = extract(self.feature_kind, frame.frame_id, frame.image, self.crop)?;
        Ok(-self.distance(&f.values))
    }
}
