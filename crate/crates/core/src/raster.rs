//! Grayscale rasters: 8-bit images for storage, `f64` planes for processing.

use std::path::Path;

use std::fs::File;
use std::io::BufWriter;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder, Luma};

use crate::error::{Error, Result};

/// Row-major `f64` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Rounds and clips to `0..=255`.
    pub fn to_gray(&self) -> GrayImage {
        let bytes = self.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, bytes).expect("buffer matches dimensions")
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel with coordinates clamped into the image (replicate border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear sample at a real-valued position, replicate border.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let p00 = self.get_clamped(xi, yi);
        if fx == 0.0 && fy == 0.0 {
            return p00;
        }
        let p10 = self.get_clamped(xi + 1, yi);
        let p01 = self.get_clamped(xi, yi + 1);
        let p11 = self.get_clamped(xi + 1, yi + 1);
        (1.0 - fy) * ((1.0 - fx) * p00 + fx * p10) + fy * ((1.0 - fx) * p01 + fx * p11)
    }

    pub fn transpose(&self) -> Plane {
        Plane::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Plane {
        Plane::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    /// 2× box downsampling (odd trailing row/column dropped).
    pub fn downsample2(&self) -> Plane {
        Plane::from_fn(self.width / 2, self.height / 2, |x, y| {
            0.25 * (self.get(2 * x, 2 * y)
                + self.get(2 * x + 1, 2 * y)
                + self.get(2 * x, 2 * y + 1)
                + self.get(2 * x + 1, 2 * y + 1))
        })
    }

    /// Area-averaging resample to an arbitrary size: each output pixel is the
    /// overlap-weighted mean of the input pixels its footprint covers.
    pub fn resample_area(&self, out_w: usize, out_h: usize) -> Plane {
        let weights = |n_in: usize, n_out: usize| -> Vec<Vec<(usize, f64)>> {
            let scale = n_in as f64 / n_out as f64;
            (0..n_out)
                .map(|o| {
                    let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
                    let mut taps = Vec::new();
                    let mut i = lo.floor() as usize;
                    while (i as f64) < hi && i < n_in {
                        let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                        if overlap > 0.0 {
                            taps.push((i, overlap / scale));
                        }
                        i += 1;
                    }
                    taps
                })
                .collect()
        };
        let wx = weights(self.width, out_w);
        let wy = weights(self.height, out_h);
        let mut rows = Plane::new(out_w, self.height, 0.0);
        for y in 0..self.height {
            for (x, taps) in wx.iter().enumerate() {
                let v = taps.iter().map(|&(i, w)| w * self.get(i, y)).sum();
                rows.set(x, y, v);
            }
        }
        let mut out = Plane::new(out_w, out_h, 0.0);
        for (y, taps) in wy.iter().enumerate() {
            for x in 0..out_w {
                let v = taps.iter().map(|&(i, w)| w * rows.get(x, i)).sum();
                out.set(x, y, v);
            }
        }
        out
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Normalized 1-D Gaussian kernel with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable convolution with a symmetric odd kernel, replicate border.
pub fn convolve_separable(img: &Plane, kernel: &[f64]) -> Plane {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = Plane::new(img.width, img.height, 0.0);
    for y in 0..img.height {
        for x in 0..img.width {
            let v = kernel
                .iter()
                .enumerate()
                .map(|(i, &k)| k * img.get_clamped(x as isize + i as isize - r, y as isize))
                .sum();
            tmp.set(x, y, v);
        }
    }
    let mut out = Plane::new(img.width, img.height, 0.0);
    for y in 0..img.height {
        for x in 0..img.width {
            let v = kernel
                .iter()
                .enumerate()
                .map(|(i, &k)| k * tmp.get_clamped(x as isize, y as isize + i as isize - r))
                .sum();
            out.set(x, y, v);
        }
    }
    out
}

/// Gaussian blur; `sigma <= 0` is the identity.
pub fn gaussian_blur(img: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return img.clone();
    }
    convolve_separable(img, &gaussian_kernel(sigma))
}

/// Dense 2-D convolution with a `(2r+1)²` kernel, replicate border.
pub fn convolve2d(img: &Plane, kernel: &Plane) -> Plane {
    let rx = (kernel.width / 2) as isize;
    let ry = (kernel.height / 2) as isize;
    let taps: Vec<(isize, isize, f64)> = (0..kernel.height)
        .flat_map(|ky| (0..kernel.width).map(move |kx| (kx, ky)))
        .filter_map(|(kx, ky)| {
            let w = kernel.get(kx, ky);
            (w != 0.0).then_some((kx as isize - rx, ky as isize - ry, w))
        })
        .collect();
    Plane::from_fn(img.width, img.height, |x, y| {
        taps.iter()
            .map(|&(dx, dy, w)| w * img.get_clamped(x as isize + dx, y as isize + dy))
            .sum()
    })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(img.into_luma8())
}

/// Binary PGM (P5).
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn gray_from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> GrayImage {
    GrayImage::from_fn(width as u32, height as u32, |x, y| Luma([f(x as usize, y as usize)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_resample_preserves_constant_and_mean() {
        let p = Plane::from_fn(132, 132, |x, y| ((x * 7 + y * 3) % 11) as f64);
        let r = p.resample_area(128, 128);
        assert_eq!((r.width, r.height), (128, 128));
        assert!((r.mean() - p.mean()).abs() < 1e-9);
        let c = Plane::new(10, 10, 3.5).resample_area(4, 4);
        assert!(c.data.iter().all(|&v| (v - 3.5).abs() < 1e-12));
    }

    #[test]
    fn gaussian_blur_preserves_constant() {
        let p = Plane::new(9, 7, 42.0);
        let b = gaussian_blur(&p, 1.7);
        assert!(b.data.iter().all(|&v| (v - 42.0).abs() < 1e-9));
    }

    #[test]
    fn bilinear_sample_interpolates() {
        let p = Plane::from_fn(2, 2, |x, y| (x + 2 * y) as f64);
        assert_eq!(p.sample(0.5, 0.0), 0.5);
        assert_eq!(p.sample(0.5, 0.5), 1.5);
        assert_eq!(p.sample(1.0, 1.0), 3.0);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = gray_from_fn(5, 3, |x, y| (x * 40 + y) as u8);
        write_pgm(&path, &img).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..2], b"P5");
        assert_eq!(read_pgm(&path).unwrap(), img);
    }
}
