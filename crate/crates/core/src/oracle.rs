//! The verification oracle: registered per-cell correlation between a capture
//! and its digital reference, and the τ partition into quality classes.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphic::DigitalReference;
use crate::raster::Plane;

/// Shifts searched per axis: −2 to 2 px in half-pixel steps.
const SHIFT_HALF_STEPS: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityLabel {
    HighQuality,
    LowQuality,
}

impl QualityLabel {
    pub fn from_score(s: f64, tau: f64) -> Self {
        if s >= tau {
            QualityLabel::HighQuality
        } else {
            QualityLabel::LowQuality
        }
    }

    pub fn is_low(self) -> bool {
        self == QualityLabel::LowQuality
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub frame_id: String,
    pub s: f64,
    pub label: QualityLabel,
}

pub fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")))
    }
}

pub fn label(frame_id: &str, s: f64, tau: f64) -> LabeledSample {
    LabeledSample {
        frame_id: frame_id.to_string(),
        s,
        label: QualityLabel::from_score(s, tau),
    }
}

pub fn label_scores(scores: &[(String, f64)], tau: f64) -> Result<Vec<LabeledSample>> {
    check_tau(tau)?;
    Ok(scores.iter().map(|(id, s)| label(id, *s, tau)).collect())
}

/// Value at rank `round(p·n)` of the sorted scores, so that a fraction `p`
/// of them falls strictly below it when scores are distinct.
pub fn percentile_tau(scores: &[f64], p: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Data("cannot derive tau from an empty train split".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((p * sorted.len() as f64).round() as usize).min(sorted.len() - 1);
    Ok(sorted[k])
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Summed-area table over a plane sampled at a fixed half-pixel phase,
/// padded so that every searched shift stays in range.
struct PhaseTable {
    pad: usize,
    stride: usize,
    sums: Vec<f64>,
}

impl PhaseTable {
    fn new(img: &Plane, phase_x: f64, phase_y: f64, pad: usize) -> Self {
        let w = img.width + 2 * pad;
        let h = img.height + 2 * pad;
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                let v = img.sample(x as f64 - pad as f64 + phase_x, y as f64 - pad as f64 + phase_y);
                row += v;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { pad, stride, sums }
    }

    /// Sum over `[x, x+w) × [y, y+h)` in unpadded image coordinates.
    fn rect(&self, x: isize, y: isize, w: usize, h: usize) -> f64 {
        let x0 = (x + self.pad as isize) as usize;
        let y0 = (y + self.pad as isize) as usize;
        let (x1, y1) = (x0 + w, y0 + h);
        let s = &self.sums;
        s[y1 * self.stride + x1] - s[y0 * self.stride + x1] - s[y1 * self.stride + x0] + s[y0 * self.stride + x0]
    }
}

/// Correlation at every searched shift, keyed by half-pixel steps `(kx, ky)`.
pub fn shift_correlations(frame: &GrayImage, reference: &DigitalReference) -> Result<Vec<((i32, i32), f64)>> {
    let side = reference.side_px();
    let dims = (frame.width() as usize, frame.height() as usize);
    if dims != (side, side) {
        return Err(Error::DimensionMismatch {
            frame: dims,
            reference: (side, side),
        });
    }
    let plane = Plane::from_gray(frame);
    let signs: Vec<f64> = reference.sg_bits().iter().map(|&b| if b == 1 { 1.0 } else { -1.0 }).collect();
    let r = reference.sg_region;
    let c = reference.cell_size_px;
    let pad = 3;
    let tables: Vec<PhaseTable> = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)]
        .iter()
        .map(|&(px, py)| PhaseTable::new(&plane, px, py, pad))
        .collect();
    let mut out = Vec::with_capacity(81);
    let mut means = vec![0.0; signs.len()];
    for ky in -SHIFT_HALF_STEPS..=SHIFT_HALF_STEPS {
        for kx in -SHIFT_HALF_STEPS..=SHIFT_HALF_STEPS {
            let (ix, ax) = (kx.div_euclid(2) as isize, kx.rem_euclid(2) as usize);
            let (iy, ay) = (ky.div_euclid(2) as isize, ky.rem_euclid(2) as usize);
            let table = &tables[ax + 2 * ay];
            let mut k = 0;
            for cy in r.y..r.y + r.height {
                for cx in r.x..r.x + r.width {
                    let x = (cx * c) as isize + ix;
                    let y = (cy * c) as isize + iy;
                    means[k] = table.rect(x, y, c, c);
                    k += 1;
                }
            }
            out.push(((kx, ky), pearson(&means, &signs)));
        }
    }
    Ok(out)
}

/// Best correlation over the shift search, clamped to `[0, 1]`.
pub fn oracle_score(frame: &GrayImage, reference: &DigitalReference) -> Result<f64> {
    let best = shift_correlations(frame, reference)?
        .into_iter()
        .map(|(_, rho)| rho)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best.clamp(0.0, 1.0))
}
