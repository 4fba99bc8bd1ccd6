//! Otsu's between-class-variance threshold.

use crate::error::{Error, Result};

/// Threshold `t` maximizing between-class variance for the split
/// `{≤ t} | {> t}`; ties go to the lowest `t`.
pub fn otsu_threshold(hist: &[f64; 256]) -> Result<u8> {
    let nonempty = hist.iter().filter(|&&c| c > 0.0).count();
    if nonempty < 2 {
        return Err(Error::InvalidArgument(format!(
            "otsu needs at least two occupied levels, got {nonempty}"
        )));
    }
    let total: f64 = hist.iter().sum();
    let total_mass: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c).sum();
    let (mut w0, mut m0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0u8);
    for t in 0..255 {
        w0 += hist[t];
        m0 += t as f64 * hist[t];
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = m0 / w0;
        let mu1 = (total_mass - m0) / w1;
        let between = (w0 / total) * (w1 / total) * (mu0 - mu1) * (mu0 - mu1);
        if between > best.0 {
            best = (between, t as u8);
        }
    }
    Ok(best.1)
}

pub fn histogram(values: impl IntoIterator<Item = u8>) -> [f64; 256] {
    let mut h = [0.0; 256];
    for v in values {
        h[v as usize] += 1.0;
    }
    h
}
