//! Rotation-invariant uniform local binary patterns, weighted by gradient
//! magnitude.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::features::gradient::gradient_magnitude;
use crate::raster::Plane;

/// Below this total gradient weight the histogram falls back to plain counts.
const MIN_WEIGHT: f64 = 1e-6;

/// Neighbour offsets `(dx, dy)` on the circle, counter-clockwise from +x.
/// Rounded to 1e-12 so symmetric positions are exactly symmetric.
pub fn circle_offsets(p: usize, r: f64) -> Vec<(f64, f64)> {
    let round = |v: f64| (v * 1e12).round() / 1e12;
    (0..p)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / p as f64;
            (round(r * a.cos()), round(-r * a.sin()))
        })
        .collect()
}

/// riu2 code: popcount for patterns with at most two circular transitions,
/// `p + 1` otherwise.
pub fn riu2_code(bits: &[bool]) -> usize {
    let p = bits.len();
    let transitions = (0..p).filter(|&k| bits[k] != bits[(k + 1) % p]).count();
    if transitions <= 2 {
        bits.iter().filter(|&&b| b).count()
    } else {
        p + 1
    }
}

/// `P + 2` bins summing to 1. A neighbour at least as bright as the centre
/// sets its bit.
pub fn lbp_features(img: &Plane, p: usize, r: usize) -> Result<Vec<f64>> {
    let min = 2 * r + 2;
    if img.width < min || img.height < min {
        return Err(Error::TooSmall {
            width: img.width,
            height: img.height,
            min,
        });
    }
    let offsets = circle_offsets(p, r as f64);
    let grad = gradient_magnitude(img);
    let mut weighted = vec![0.0; p + 2];
    let mut counts = vec![0.0; p + 2];
    let mut bits = vec![false; p];
    for y in r..img.height - r {
        for x in r..img.width - r {
            let c = img.get(x, y);
            for (b, &(dx, dy)) in bits.iter_mut().zip(&offsets) {
                *b = img.sample(x as f64 + dx, y as f64 + dy) >= c;
            }
            let code = riu2_code(&bits);
            weighted[code] += grad.get(x, y);
            counts[code] += 1.0;
        }
    }
    let wsum: f64 = weighted.iter().sum();
    let (hist, total) = if wsum >= MIN_WEIGHT {
        (weighted, wsum)
    } else {
        let n: f64 = counts.iter().sum();
        (counts, n)
    };
    Ok(hist.into_iter().map(|v| v / total).collect())
}
