//! Training-free scorers: random, gradient sharpness, and the gray-pixel
//! blur ratio.

use image::GrayImage;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::features::{gradient_magnitude, histogram, otsu_threshold};
use crate::models::{FrameView, ModelArtifact, ModelKind, QualityScorer};
use crate::raster::Plane;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct RandomScorer {
    pub model_id: String,
    pub seed: u64,
}

impl RandomScorer {
    pub fn new(model_id: &str, seed: u64) -> Self {
        Self {
            model_id: model_id.to_string(),
            seed,
        }
    }

    pub fn to_artifact(&self, config_hash: &str) -> ModelArtifact {
        let mut a = ModelArtifact::new(&self.model_id, ModelKind::Random, config_hash);
        a.hyperparameters.insert("seed".into(), json!(self.seed));
        a
    }

    pub fn from_artifact(a: &ModelArtifact) -> Result<Self> {
        Ok(Self::new(&a.model_id, a.hyper_u64("seed")?))
    }
}

impl QualityScorer for RandomScorer {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Uniform on [0, 1), keyed by `(seed, frame_id)`.
    fn score(&self, frame: &FrameView<'_>) -> Result<f64> {
        Ok(seed::unit_interval(seed::derive(self.seed, frame.frame_id)))
    }

    fn metadata(&self) -> Value {
        json!({ "seed": self.seed })
    }
}

/// Mean gradient magnitude over the pixels whose magnitude falls in a
/// histogram bin above the Otsu threshold; 0 when no such pixel exists.
pub fn sharpness_score(img: &Plane) -> f64 {
    let g = gradient_magnitude(img);
    let (lo, hi) = g.min_max();
    if !(hi > lo) {
        return 0.0;
    }
    let bin = |v: f64| (((v - lo) / (hi - lo) * 256.0).floor() as usize).min(255);
    let mut hist = [0.0; 256];
    for &v in &g.data {
        hist[bin(v)] += 1.0;
    }
    let Ok(theta) = otsu_threshold(&hist) else {
        return 0.0;
    };
    let (mut sum, mut count) = (0.0, 0.0);
    for &v in &g.data {
        if bin(v) > theta as usize {
            sum += v;
            count += 1.0;
        }
    }
    if count == 0.0 {
        0.0
    } else {
        sum / count
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SharpnessScorer {
    pub model_id: String,
}

impl SharpnessScorer {
    pub fn new(model_id: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
        }
    }

    pub fn to_artifact(&self, config_hash: &str) -> ModelArtifact {
        ModelArtifact::new(&self.model_id, ModelKind::Sharpness, config_hash)
    }

    pub fn from_artifact(a: &ModelArtifact) -> Result<Self> {
        Ok(Self::new(&a.model_id))
    }
}

impl QualityScorer for SharpnessScorer {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn score(&self, frame: &FrameView<'_>) -> Result<f64> {
        Ok(sharpness_score(&Plane::from_gray(frame.image)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurBreakdown {
    /// Pixels inside the gray band.
    pub u: usize,
    /// Dark-to-light transitions along rows and columns.
    pub t: usize,
    pub csp: usize,
    /// `u / (t · csp)`, infinite when `t = 0`.
    pub q_blur: f64,
    pub black_mode: u8,
    pub white_mode: u8,
    /// Centre of the gray band.
    pub theta: f64,
    /// Half-width of the gray band.
    pub band: f64,
}

/// Most populated level in `lo..=hi` (earliest on ties).
fn mode(hist: &[f64; 256], lo: usize, hi: usize) -> u8 {
    let mut best = lo;
    for i in lo..=hi {
        if hist[i] > hist[best] {
            best = i;
        }
    }
    best as u8
}

fn count_transitions(line: impl Iterator<Item = u8>, dark: f64, light: f64, csp: usize) -> usize {
    let mut last_dark: Option<usize> = None;
    let mut t = 0;
    for (i, v) in line.enumerate() {
        let v = f64::from(v);
        if v < dark {
            last_dark = Some(i);
        } else if v > light {
            if let Some(d) = last_dark {
                if i - d <= csp {
                    t += 1;
                }
            }
            last_dark = None;
        }
    }
    t
}

/// Otsu splits the histogram into dark and light classes; their modes anchor
/// a gray band centred between them with half-width `band_fraction` of their
/// gap. A transition is a dark pixel followed, within `csp` pixels, by a
/// light one, scanning rows left to right then columns top to bottom.
pub fn blur_breakdown(img: &GrayImage, csp: usize, band_fraction: f64) -> BlurBreakdown {
    let hist = histogram(img.as_raw().iter().copied());
    let (w, h) = (img.width() as usize, img.height() as usize);
    let degenerate = BlurBreakdown {
        u: 0,
        t: 0,
        csp,
        q_blur: f64::INFINITY,
        black_mode: 0,
        white_mode: 0,
        theta: 0.0,
        band: 0.0,
    };
    let Ok(split) = otsu_threshold(&hist) else {
        return degenerate;
    };
    let black_mode = mode(&hist, 0, split as usize);
    let white_mode = mode(&hist, split as usize + 1, 255);
    let theta = 0.5 * (f64::from(black_mode) + f64::from(white_mode));
    let band = band_fraction * (f64::from(white_mode) - f64::from(black_mode));
    let (dark, light) = (theta - band, theta + band);
    let raw = img.as_raw();
    let u = raw.iter().filter(|&&v| (dark..=light).contains(&f64::from(v))).count();
    let mut t = 0;
    for y in 0..h {
        t += count_transitions(raw[y * w..(y + 1) * w].iter().copied(), dark, light, csp);
    }
    for x in 0..w {
        t += count_transitions((0..h).map(|y| raw[y * w + x]), dark, light, csp);
    }
    let q_blur = if t == 0 {
        f64::INFINITY
    } else {
        u as f64 / (t * csp) as f64
    };
    BlurBreakdown {
        u,
        t,
        csp,
        q_blur,
        black_mode,
        white_mode,
        theta,
        band,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlurScorer {
    pub model_id: String,
    pub csp: usize,
    pub band_fraction: f64,
}

impl BlurScorer {
    pub fn new(model_id: &str, csp: usize, band_fraction: f64) -> Result<Self> {
        if csp == 0 || !(band_fraction > 0.0 && band_fraction < 0.5) {
            return Err(Error::InvalidArgument("blur scorer needs csp >= 1 and band in (0, 0.5)".into()));
        }
        Ok(Self {
            model_id: model_id.to_string(),
            csp,
            band_fraction,
        })
    }

    pub fn breakdown(&self, img: &GrayImage) -> BlurBreakdown {
        blur_breakdown(img, self.csp, self.band_fraction)
    }

    pub fn to_artifact(&self, config_hash: &str) -> ModelArtifact {
        let mut a = ModelArtifact::new(&self.model_id, ModelKind::Blur, config_hash);
        a.hyperparameters.insert("csp".into(), json!(self.csp));
        a.hyperparameters.insert("band_fraction".into(), json!(self.band_fraction));
        a
    }

    pub fn from_artifact(a: &ModelArtifact) -> Result<Self> {
        Self::new(&a.model_id, a.hyper_u64("csp")? as usize, a.hyper_f64("band_fraction")?)
    }
}

impl QualityScorer for BlurScorer {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    /// `−q_blur`; frames without a single transition get the lowest finite score.
    fn score(&self, frame: &FrameView<'_>) -> Result<f64> {
        let b = self.breakdown(frame.image);
        Ok(if b.t == 0 {
            f64::MIN
        } else if b.q_blur == 0.0 {
            0.0
        } else {
            -b.q_blur
        })
    }

    fn metadata(&self) -> Value {
        json!({ "csp": self.csp, "band_fraction": self.band_fraction })
    }
}
