//! The single pipeline configuration document.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capture::DomainId;
use crate::error::{Error, Result};
use crate::gatekeeper::GatePolicy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub gatekeeper: GatekeeperConfig,
    /// Excluded from the config hash so a run can be relocated.
    #[serde(default)]
    pub paths: PathsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    pub graphics_per_domain: usize,
    pub sessions_per_graphic: usize,
    pub frames_per_session: usize,
    pub split: SplitFractions,
    /// The first domain is the in-domain one; the second supplies the
    /// cross-domain test split.
    pub domains: Vec<DomainId>,
    pub grid_cells: usize,
    pub cell_size_px: usize,
    pub density: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 20240601,
            graphics_per_domain: 60,
            sessions_per_graphic: 2,
            frames_per_session: 10,
            split: SplitFractions::default(),
            domains: vec![DomainId::DomainADigital, DomainId::DomainBOffset],
            grid_cells: 33,
            cell_size_px: 4,
            density: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TauPolicy {
    /// Percentile (as a fraction) of the in-domain train scores.
    TrainPercentile { percentile: f64 },
    Fixed { tau: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub tau_policy: TauPolicy,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            tau_policy: TauPolicy::TrainPercentile { percentile: 0.4 },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRegion {
    #[default]
    Full,
    Sg,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub region: FeatureRegion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelRidgeConfig {
    pub lambda_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
}

impl Default for KernelRidgeConfig {
    fn default() -> Self {
        Self {
            lambda_grid: vec![1e-3, 1e-2, 1e-1, 1.0],
            gamma_grid: vec![0.01, 0.1, 1.0, 10.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvgConfig {
    /// Oracle score a train frame must exceed to join the reference model.
    pub cutoff: f64,
    /// Ridge added to the covariance, relative to its mean eigenvalue.
    pub epsilon_rel: f64,
}

impl Default for MvgConfig {
    fn default() -> Self {
        Self {
            cutoff: 0.95,
            epsilon_rel: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlurConfig {
    /// Half-width of the gray band as a fraction of the black/white mode gap.
    pub band_fraction: f64,
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self { band_fraction: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub input_size: usize,
    pub channels: usize,
    pub hidden: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            input_size: 128,
            channels: 32,
            hidden: 64,
            max_epochs: 200,
            patience: 10,
            batch_size: 32,
            learning_rate: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub conv_channels: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            conv_channels: 16,
            max_epochs: 200,
            patience: 10,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

pub const ALL_MODEL_IDS: [&str; 8] = [
    "random",
    "sharpness",
    "blur",
    "niqe-sg",
    "niqe-lbp-sg",
    "brisque-sgm",
    "lbp-sgm",
    "cnn3x32-sgm",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub ids: Vec<String>,
    pub kernel_ridge: KernelRidgeConfig,
    pub mvg: MvgConfig,
    pub blur: BlurConfig,
    pub cnn: CnnConfig,
    pub probe: ProbeConfig,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            ids: ALL_MODEL_IDS.iter().map(|s| s.to_string()).collect(),
            kernel_ridge: KernelRidgeConfig::default(),
            mvg: MvgConfig::default(),
            blur: BlurConfig::default(),
            cnn: CnnConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub pauc_max_discard: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { pauc_max_discard: 0.7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatekeeperConfig {
    /// Gate threshold on q; when absent the frozen τ is used.
    pub sigma: Option<f64>,
    pub policy: GatePolicy,
}

impl Default for GatekeeperConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            policy: GatePolicy::FirstAbove,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub run_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            oracle: OracleConfig::default(),
            features: FeatureConfig::default(),
            models: ModelsConfig::default(),
            evaluation: EvaluationConfig::default(),
            gatekeeper: GatekeeperConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.graphics_per_domain == 0 || d.sessions_per_graphic == 0 || d.frames_per_session == 0 {
            return Err(config_err("dataset counts must be >= 1"));
        }
        if d.grid_cells < 9 || d.cell_size_px < 2 {
            return Err(config_err("grid_cells must be >= 9 and cell_size_px >= 2"));
        }
        if !(0.0..=1.0).contains(&d.density) {
            return Err(config_err("density must lie in [0, 1]"));
        }
        let s = d.split;
        if [s.train, s.val, s.test].iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(config_err("split fractions must be finite and non-negative"));
        }
        if (s.train + s.val + s.test - 1.0).abs() > 1e-9 {
            return Err(config_err(format!(
                "split fractions must sum to 1, got {}",
                s.train + s.val + s.test
            )));
        }
        if d.domains.is_empty() || d.domains.len() > 2 {
            return Err(config_err("domains must list one or two print domains"));
        }
        if d.domains.len() == 2 && d.domains[0] == d.domains[1] {
            return Err(config_err("domains must be distinct"));
        }
        match self.oracle.tau_policy {
            TauPolicy::TrainPercentile { percentile } if !(percentile > 0.0 && percentile < 1.0) => {
                return Err(config_err("tau percentile must lie in (0, 1)"));
            }
            TauPolicy::Fixed { tau } if !(tau > 0.0 && tau < 1.0) => {
                return Err(config_err("tau must lie in (0, 1)"));
            }
            _ => {}
        }
        let m = &self.models;
        for id in &m.ids {
            if !ALL_MODEL_IDS.contains(&id.as_str()) {
                return Err(config_err(format!("unknown model id {id:?}")));
            }
        }
        let kr = &m.kernel_ridge;
        if kr.lambda_grid.is_empty() || kr.gamma_grid.is_empty() {
            return Err(config_err("kernel ridge grids must be non-empty"));
        }
        if kr.lambda_grid.iter().chain(&kr.gamma_grid).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(config_err("kernel ridge grid values must be positive"));
        }
        if !(m.mvg.epsilon_rel >= 0.0) {
            return Err(config_err("mvg epsilon_rel must be >= 0"));
        }
        if !(m.blur.band_fraction > 0.0 && m.blur.band_fraction < 0.5) {
            return Err(config_err("blur band_fraction must lie in (0, 0.5)"));
        }
        let c = &m.cnn;
        if c.input_size < 8 || c.input_size % 8 != 0 {
            return Err(config_err("cnn input_size must be a positive multiple of 8"));
        }
        if c.channels == 0 || c.hidden == 0 || c.batch_size == 0 || c.max_epochs == 0 {
            return Err(config_err("cnn sizes must be >= 1"));
        }
        if !(c.learning_rate > 0.0) || !(m.probe.learning_rate > 0.0) {
            return Err(config_err("learning rates must be positive"));
        }
        if m.probe.conv_channels == 0 || m.probe.batch_size == 0 || m.probe.max_epochs == 0 {
            return Err(config_err("probe sizes must be >= 1"));
        }
        let r = self.evaluation.pauc_max_discard;
        if !(r > 0.0 && r <= 1.0) {
            return Err(config_err("pauc_max_discard must lie in (0, 1]"));
        }
        if let Some(sigma) = self.gatekeeper.sigma {
            if !sigma.is_finite() {
                return Err(config_err("gatekeeper sigma must be finite"));
            }
        }
        if let GatePolicy::BestInWindow { w: 0 } = self.gatekeeper.policy {
            return Err(config_err("gatekeeper window must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical (sorted-key, compact) JSON of everything but
    /// the paths block.
    pub fn config_hash(&self) -> String {
        let mut hashed = self.clone();
        hashed.paths = PathsConfig::default();
        let value = serde_json::to_value(&hashed).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex(&Sha256::digest(canonical.as_bytes()))
    }

    pub fn primary_domain(&self) -> DomainId {
        self.dataset.domains[0]
    }

    pub fn cross_domain(&self) -> Option<DomainId> {
        self.dataset.domains.get(1).copied()
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
