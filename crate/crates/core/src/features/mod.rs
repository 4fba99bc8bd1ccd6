//! Handcrafted descriptors shared by the scorers.

pub mod cache;
pub mod gradient;
pub mod lbp;
pub mod nss;
pub mod otsu;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::config::FeatureRegion;
use crate::error::{Error, Result};
use crate::raster::Plane;

pub use gradient::gradient_magnitude;
pub use lbp::lbp_features;
pub use nss::{aggd_fit, brisque_features, ggd_fit, mscn, AggdParams};
pub use otsu::{histogram, otsu_threshold};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Brisque36,
    Lbp10,
}

impl FeatureKind {
    pub fn dim(self) -> usize {
        match self {
            FeatureKind::Brisque36 => 36,
            FeatureKind::Lbp10 => 10,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            FeatureKind::Brisque36 => 0,
            FeatureKind::Lbp10 => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(FeatureKind::Brisque36),
            1 => Some(FeatureKind::Lbp10),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

/// Pixel window features are computed over: the whole frame or only the
/// secure-graphic window, as `(x, y, width, height)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Crop {
    pub fn for_region(region: FeatureRegion, sg_region_px: (usize, usize, usize, usize)) -> Option<Crop> {
        match region {
            FeatureRegion::Full => None,
            FeatureRegion::Sg => {
                let (x, y, width, height) = sg_region_px;
                Some(Crop { x, y, width, height })
            }
        }
    }
}

pub fn prepare(img: &GrayImage, crop: Option<Crop>) -> Result<Plane> {
    let plane = Plane::from_gray(img);
    match crop {
        None => Ok(plane),
        Some(c) => {
            if c.x + c.width > plane.width || c.y + c.height > plane.height {
                return Err(Error::InvalidArgument(format!(
                    "crop {c:?} exceeds a {}x{} frame",
                    plane.width, plane.height
                )));
            }
            Ok(plane.crop(c.x, c.y, c.width, c.height))
        }
    }
}

pub fn extract_plane(kind: FeatureKind, plane: &Plane) -> Result<FeatureVector> {
    let values = match kind {
        FeatureKind::Brisque36 => brisque_features(plane)?,
        FeatureKind::Lbp10 => lbp_features(plane, 8, 8)?,
    };
    if values.len() != kind.dim() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{kind:?} produced a malformed vector")));
    }
    Ok(FeatureVector { kind, values })
}

/// Extracts features for one frame; failures are tagged with its id.
pub fn extract(kind: FeatureKind, frame_id: &str, img: &GrayImage, crop: Option<Crop>) -> Result<FeatureVector> {
    prepare(img, crop)
        .and_then(|p| extract_plane(kind, &p))
        .map_err(|e| Error::Feature {
            frame_id: frame_id.to_string(),
            source: Box::new(e),
        })
}
