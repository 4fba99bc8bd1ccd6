//! Pristine digital references: a random secure-graphic window inside a
//! QR-like scaffold with a fixed two-cell synchronization border.
//!
//! Bit convention: 0 = black (ink), 1 = white.

use std::fs;
use std::path::Path;

use image::GrayImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{gray_from_fn, read_pgm, write_pgm};
use crate::seed;

/// Axis-aligned rectangle in cell coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl CellRect {
    pub fn contains(&self, cx: usize, cy: usize) -> bool {
        cx >= self.x && cx < self.x + self.width && cy >= self.y && cy < self.y + self.height
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DigitalReference {
    pub graphic_id: String,
    pub grid_cells: usize,
    pub cell_size_px: usize,
    pub sg_region: CellRect,
    /// Row-major `grid_cells × grid_cells`.
    pub bits: Vec<u8>,
    pub density: f64,
    pub seed: u64,
}

/// JSON sidecar persisted next to the reference PGM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSidecar {
    pub graphic_id: String,
    pub seed: u64,
    pub grid_cells: usize,
    pub cell_size_px: usize,
    pub sg_region: CellRect,
    pub density: f64,
}

const BORDER: usize = 2;

/// Secure-graphic window: centred, leaving a scaffold ring of
/// `max(1, grid/8)` cells between it and the border.
pub fn sg_region_for(grid_cells: usize) -> CellRect {
    let margin = BORDER + (grid_cells / 8).max(1);
    let side = grid_cells - 2 * margin;
    CellRect {
        x: margin,
        y: margin,
        width: side,
        height: side,
    }
}

pub fn graphic_id_for(seed: u64) -> String {
    format!("sg-{seed:016x}")
}

pub fn generate_reference(seed: u64, grid_cells: usize, cell_size_px: usize, density: f64) -> Result<DigitalReference> {
    if grid_cells < 9 {
        return Err(Error::InvalidArgument(format!("grid_cells must be >= 9, got {grid_cells}")));
    }
    if cell_size_px < 2 {
        return Err(Error::InvalidArgument(format!("cell_size_px must be >= 2, got {cell_size_px}")));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArgument(format!("density must lie in [0, 1], got {density}")));
    }
    let region = sg_region_for(grid_cells);
    let mut sg_rng = seed::rng(seed, "graphic/sg");
    let mut fill_rng = seed::rng(seed, "graphic/scaffold");
    let mut bits = vec![1u8; grid_cells * grid_cells];
    for cy in 0..grid_cells {
        for cx in 0..grid_cells {
            let ring = cx.min(cy).min(grid_cells - 1 - cx).min(grid_cells - 1 - cy);
            let bit = if ring == 0 {
                0
            } else if ring == 1 {
                1
            } else if region.contains(cx, cy) {
                u8::from(sg_rng.random::<f64>() >= density)
            } else {
                u8::from(fill_rng.random::<f64>() >= 0.5)
            };
            bits[cy * grid_cells + cx] = bit;
        }
    }
    Ok(DigitalReference {
        graphic_id: graphic_id_for(seed),
        grid_cells,
        cell_size_px,
        sg_region: region,
        bits,
        density,
        seed,
    })
}

impl DigitalReference {
    pub fn bit(&self, cx: usize, cy: usize) -> u8 {
        self.bits[cy * self.grid_cells + cx]
    }

    pub fn side_px(&self) -> usize {
        self.grid_cells * self.cell_size_px
    }

    /// Secure-graphic window in pixels: `(x, y, width, height)`.
    pub fn sg_region_px(&self) -> (usize, usize, usize, usize) {
        let c = self.cell_size_px;
        let r = self.sg_region;
        (r.x * c, r.y * c, r.width * c, r.height * c)
    }

    /// Bits of the secure-graphic window, row-major.
    pub fn sg_bits(&self) -> Vec<u8> {
        let r = self.sg_region;
        (r.y..r.y + r.height)
            .flat_map(|cy| (r.x..r.x + r.width).map(move |cx| (cx, cy)))
            .map(|(cx, cy)| self.bit(cx, cy))
            .collect()
    }

    pub fn sidecar(&self) -> ReferenceSidecar {
        ReferenceSidecar {
            graphic_id: self.graphic_id.clone(),
            seed: self.seed,
            grid_cells: self.grid_cells,
            cell_size_px: self.cell_size_px,
            sg_region: self.sg_region,
            density: self.density,
        }
    }

    /// Regenerates a reference from its sidecar and checks the region matches.
    pub fn from_sidecar(s: &ReferenceSidecar) -> Result<Self> {
        let mut r = generate_reference(s.seed, s.grid_cells, s.cell_size_px, s.density)?;
        if r.sg_region != s.sg_region {
            return Err(Error::Data(format!("{}: sidecar region does not match generator", s.graphic_id)));
        }
        r.graphic_id = s.graphic_id.clone();
        Ok(r)
    }
}

/// Each cell becomes a `csp × csp` block of 0 or 255.
pub fn render(reference: &DigitalReference) -> GrayImage {
    let c = reference.cell_size_px;
    let side = reference.side_px();
    gray_from_fn(side, side, |x, y| if reference.bit(x / c, y / c) == 1 { 255 } else { 0 })
}

/// Per-cell mean thresholded at 128: the inverse of [`render`].
pub fn downsample_bits(img: &GrayImage, grid_cells: usize, cell_size_px: usize) -> Vec<u8> {
    let c = cell_size_px;
    let mut bits = Vec::with_capacity(grid_cells * grid_cells);
    for cy in 0..grid_cells {
        for cx in 0..grid_cells {
            let sum: u32 = (0..c)
                .flat_map(|dy| (0..c).map(move |dx| (dx, dy)))
                .map(|(dx, dy)| u32::from(img.get_pixel((cx * c + dx) as u32, (cy * c + dy) as u32).0[0]))
                .sum();
            bits.push(u8::from(sum as f64 / (c * c) as f64 >= 128.0));
        }
    }
    bits
}

/// Writes `<dir>/<graphic_id>.pgm` and `<dir>/<graphic_id>.json`.
pub fn save_reference(dir: &Path, reference: &DigitalReference) -> Result<()> {
    write_pgm(&dir.join(format!("{}.pgm", reference.graphic_id)), &render(reference))?;
    let path = dir.join(format!("{}.json", reference.graphic_id));
    let json = serde_json::to_string(&reference.sidecar()).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Loads a reference from its sidecar and verifies the stored PGM against it.
pub fn load_reference(dir: &Path, graphic_id: &str) -> Result<DigitalReference> {
    let path = dir.join(format!("{graphic_id}.json"));
    let text = fs::read_to_string(&path)
        .map_err(|_| Error::Data(format!("missing reference for graphic_id {graphic_id} ({})", path.display())))?;
    let sidecar: ReferenceSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let reference = DigitalReference::from_sidecar(&sidecar)?;
    let img = read_pgm(&dir.join(format!("{graphic_id}.pgm")))?;
    if img != render(&reference) {
        return Err(Error::Data(format!("reference image for {graphic_id} does not match its sidecar")));
    }
    Ok(reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_density_whitens_the_secure_graphic() {
        let r = generate_reference(7, 33, 4, 0.0).unwrap();
        assert!(r.sg_bits().iter().all(|&b| b == 1));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_reference(7, 33, 4, 0.5).unwrap();
        let b = generate_reference(7, 33, 4, 0.5).unwrap();
        assert_eq!(a.bits, b.bits);
    }

    #[test]
    fn half_density_black_fraction_is_binomial() {
        let r = generate_reference(42, 33, 4, 0.5).unwrap();
        let sg = r.sg_bits();
        let n = sg.len() as f64;
        let black = sg.iter().filter(|&&b| b == 0).count() as f64;
        let sd = (n * 0.25).sqrt();
        assert!((black - n * 0.5).abs() <= 3.0 * sd, "{black} black of {n}");
    }

    #[test]
    fn border_is_seed_independent() {
        let a = generate_reference(1, 21, 2, 0.5).unwrap();
        let b = generate_reference(99, 21, 2, 0.9).unwrap();
        for cy in 0..21 {
            for cx in 0..21 {
                let ring = cx.min(cy).min(20 - cx).min(20 - cy);
                if ring < 2 {
                    assert_eq!(a.bit(cx, cy), b.bit(cx, cy));
                    assert_eq!(a.bit(cx, cy), u8::from(ring == 1));
                }
            }
        }
        let r = a.sg_region;
        assert!(r.x >= 2 && r.y >= 2 && r.x + r.width <= 19 && r.y + r.height <= 19);
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(generate_reference(1, 8, 4, 0.5).is_err());
        assert!(generate_reference(1, 33, 1, 0.5).is_err());
        assert!(generate_reference(1, 33, 4, 1.5).is_err());
        assert!(generate_reference(1, 33, 4, -0.1).is_err());
    }

    #[test]
    fn render_expands_cells() {
        let r = generate_reference(3, 33, 4, 0.5).unwrap();
        let img = render(&r);
        assert_eq!(img.dimensions(), (132, 132));
        assert!(img.as_raw().iter().all(|&v| v == 0 || v == 255));
        let r3 = generate_reference(3, 9, 3, 0.5).unwrap();
        let img3 = render(&r3);
        // corner cell is border black
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(img3.get_pixel(x, y).0[0], 0);
            }
        }
    }

    #[test]
    fn persisted_reference_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let r = generate_reference(11, 17, 3, 0.4).unwrap();
        save_reference(dir.path(), &r).unwrap();
        let back = load_reference(dir.path(), &r.graphic_id).unwrap();
        assert_eq!(back, r);
        assert!(load_reference(dir.path(), "nope").is_err());
    }

    proptest! {
        #[test]
        fn render_then_downsample_recovers_bits(seed in any::<u64>(), grid in 9usize..40, csp in 2usize..6, density in 0.0f64..=1.0) {
            let r = generate_reference(seed, grid, csp, density).unwrap();
            prop_assert_eq!(downsample_bits(&render(&r), grid, csp), r.bits);
        }
    }
}
