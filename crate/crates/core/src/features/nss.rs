//! Natural-scene statistics: MSCN coefficients, GGD/AGGD moment fits and the
//! 36-D BRISQUE-style descriptor.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::raster::Plane;

const WINDOW_RADIUS: isize = 3;
const WINDOW_SIGMA: f64 = 7.0 / 6.0;
const C: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggdParams {
    pub alpha: f64,
    pub sigma_l: f64,
    pub sigma_r: f64,
    pub mean_shift: f64,
}

fn window() -> Vec<(isize, isize, f64)> {
    let mut w = Vec::with_capacity(49);
    for dy in -WINDOW_RADIUS..=WINDOW_RADIUS {
        for dx in -WINDOW_RADIUS..=WINDOW_RADIUS {
            let r2 = (dx * dx + dy * dy) as f64;
            w.push((dx, dy, (-r2 / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp()));
        }
    }
    w
}

/// Local mean and standard deviation are taken as weighted moments of the
/// deviations from the centre pixel, so a flat neighbourhood yields exactly 0.
pub fn mscn(img: &Plane) -> Result<Plane> {
    if img.width < 16 || img.height < 16 {
        return Err(Error::TooSmall {
            width: img.width,
            height: img.height,
            min: 16,
        });
    }
    let taps = window();
    let (w, h) = (img.width as isize, img.height as isize);
    Ok(Plane::from_fn(img.width, img.height, |x, y| {
        let centre = img.get(x, y);
        let (mut sw, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for &(dx, dy, wt) in &taps {
            let (xx, yy) = (x as isize + dx, y as isize + dy);
            if xx < 0 || yy < 0 || xx >= w || yy >= h {
                continue;
            }
            let d = img.get(xx as usize, yy as usize) - centre;
            sw += wt;
            m1 += wt * d;
            m2 += wt * d * d;
        }
        m1 /= sw;
        m2 /= sw;
        let sigma = (m2 - m1 * m1).max(0.0).sqrt();
        -m1 / (sigma + C)
    }))
}

/// `Γ(2/α)² / (Γ(1/α)·Γ(3/α))`, increasing in α.
fn ggd_ratio(alpha: f64) -> f64 {
    (2.0 * ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha)).exp()
}

/// Shape α with `ggd_ratio(α) = target`, by bisection on [0.05, 10].
fn solve_alpha(target: f64) -> f64 {
    let (mut lo, mut hi) = (0.05, 10.0);
    if target <= ggd_ratio(lo) {
        return lo;
    }
    if target >= ggd_ratio(hi) {
        return hi;
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if ggd_ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sum in ascending order, so that equal multisets give bit-identical totals.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.len() < 100 {
        return Err(Error::InvalidArgument(format!(
            "distribution fit needs >= 100 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite sample in distribution fit".into()));
    }
    Ok(())
}

/// Symmetric GGD fit: zero mean shift and `sigma_l = sigma_r`.
pub fn ggd_fit(samples: &[f64]) -> Result<AggdParams> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let sq = sorted_sum(samples.iter().map(|v| v * v).collect()) / n;
    if sq <= 0.0 {
        return Err(Error::DegenerateVariance("ggd fit"));
    }
    let abs = sorted_sum(samples.iter().map(|v| v.abs()).collect()) / n;
    let alpha = solve_alpha(abs * abs / sq);
    let sigma = sq.sqrt();
    Ok(AggdParams {
        alpha,
        sigma_l: sigma,
        sigma_r: sigma,
        mean_shift: 0.0,
    })
}

/// Asymmetric GGD fit by moment matching on the left and right tails.
pub fn aggd_fit(samples: &[f64]) -> Result<AggdParams> {
    check_samples(samples)?;
    let left: Vec<f64> = samples.iter().filter(|&&v| v < 0.0).map(|v| v * v).collect();
    let right: Vec<f64> = samples.iter().filter(|&&v| v > 0.0).map(|v| v * v).collect();
    if left.is_empty() || right.is_empty() {
        return Err(Error::DegenerateVariance("aggd fit (one-sided samples)"));
    }
    let (nl, nr) = (left.len() as f64, right.len() as f64);
    let sigma_l = (sorted_sum(left) / nl).sqrt();
    let sigma_r = (sorted_sum(right) / nr).sqrt();
    let n = samples.len() as f64;
    let sq = sorted_sum(samples.iter().map(|v| v * v).collect()) / n;
    let abs = sorted_sum(samples.iter().map(|v| v.abs()).collect()) / n;
    let gamma = sigma_l / sigma_r;
    let r_hat = abs * abs / sq;
    let big_r = r_hat * (gamma.powi(3) + 1.0) * (gamma + 1.0) / (gamma * gamma + 1.0).powi(2);
    let alpha = solve_alpha(big_r);
    let a = 1.0 / alpha;
    let ratio = (ln_gamma(2.0 * a) - ln_gamma(a)).exp() * (ln_gamma(a) - ln_gamma(3.0 * a)).exp().sqrt();
    Ok(AggdParams {
        alpha,
        sigma_l,
        sigma_r,
        mean_shift: (sigma_r - sigma_l) * ratio,
    })
}

/// Neighbour offsets of the four pairwise-product bands:
/// horizontal, vertical, main diagonal, anti-diagonal.
const PAIRS: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];

fn pair_products(m: &Plane, (dx, dy): (isize, isize)) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.width * m.height);
    for y in 0..m.height as isize - dy {
        for x in 0..m.width as isize {
            let xx = x + dx;
            if xx < 0 || xx >= m.width as isize {
                continue;
            }
            out.push(m.get(x as usize, y as usize) * m.get(xx as usize, (y + dy) as usize));
        }
    }
    out
}

fn scale_features(img: &Plane, out: &mut Vec<f64>) -> Result<()> {
    let m = mscn(img)?;
    let g = ggd_fit(&m.data)?;
    out.extend([g.alpha, g.sigma_l * g.sigma_l]);
    for pair in PAIRS {
        let a = aggd_fit(&pair_products(&m, pair))?;
        out.extend([a.alpha, a.mean_shift, a.sigma_l * a.sigma_l, a.sigma_r * a.sigma_r]);
    }
    Ok(())
}

/// 36 values: for the original scale then the 2× box-downsampled one,
/// `[α, σ²]` of the MSCN GGD followed by `[α, η, σ_l², σ_r²]` for the
/// horizontal, vertical, diagonal and anti-diagonal products.
pub fn brisque_features(img: &Plane) -> Result<Vec<f64>> {
    if img.width < 32 || img.height < 32 {
        return Err(Error::TooSmall {
            width: img.width,
            height: img.height,
            min: 32,
        });
    }
    let mut out = Vec::with_capacity(36);
    scale_features(img, &mut out)?;
    scale_features(&img.downsample2(), &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_image_has_zero_mscn() {
        let m = mscn(&Plane::new(20, 18, 137.0)).unwrap();
        assert!(m.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_images_are_rejected() {
        assert!(matches!(mscn(&Plane::new(15, 40, 1.0)), Err(Error::TooSmall { .. })));
        assert!(matches!(brisque_features(&Plane::new(31, 40, 1.0)), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn white_noise_mscn_is_near_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = Normal::new(128.0, 20.0).unwrap();
        let img = Plane::from_fn(128, 128, |_, _| n.sample(&mut rng));
        let m = mscn(&img).unwrap();
        let len = m.data.len() as f64;
        let mean = m.data.iter().sum::<f64>() / len;
        let var = m.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
        let kurt = m.data.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / len / (var * var) - 3.0;
        assert!(kurt.abs() < 1.0, "excess kurtosis {kurt}");
    }

    #[test]
    fn mirrored_samples_have_zero_mean_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = Normal::new(0.3, 1.7).unwrap();
        let half: Vec<f64> = (0..500).map(|_| n.sample(&mut rng)).collect();
        let all: Vec<f64> = half.iter().copied().chain(half.iter().map(|v| -v)).collect();
        let p = aggd_fit(&all).unwrap();
        assert_eq!(p.mean_shift, 0.0);
        assert_eq!(p.sigma_l, p.sigma_r);
    }

    #[test]
    fn degenerate_samples_are_rejected() {
        assert!(matches!(ggd_fit(&[0.0; 200]), Err(Error::DegenerateVariance(_))));
        assert!(matches!(aggd_fit(&[1.0; 200]), Err(Error::DegenerateVariance(_))));
        assert!(ggd_fit(&[1.0; 50]).is_err());
    }

    #[test]
    fn ratio_is_monotone_over_the_bracket() {
        let mut prev = 0.0;
        for i in 1..=200 {
            let r = ggd_ratio(0.05 * i as f64);
            assert!(r > prev);
            prev = r;
        }
        assert!((solve_alpha(ggd_ratio(2.0)) - 2.0).abs() < 1e-5);
    }

    #[test]
    fn brisque_rejects_flat_frames_and_returns_36_values() {
        assert!(brisque_features(&Plane::new(64, 64, 80.0)).is_err());
        let img = Plane::from_fn(64, 64, |x, y| ((x * 31 + y * 17) % 97) as f64 * 2.0);
        let f = brisque_features(&img).unwrap();
        assert_eq!(f.len(), 36);
        assert!(f.iter().all(|v| v.is_finite()));
    }
}
