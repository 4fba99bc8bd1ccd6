//! Print-and-scan channel: a press model applied once per printed graphic,
//! then per-frame phone-capture degradations along a session trajectory.

use std::f64::consts::PI;

use image::GrayImage;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphic::{render, DigitalReference};
use crate::raster::{convolve2d, gaussian_blur, Plane};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DomainId {
    #[serde(rename = "DomainA_digital")]
    DomainADigital,
    #[serde(rename = "DomainB_offset")]
    DomainBOffset,
}

impl DomainId {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainId::DomainADigital => "DomainA_digital",
            DomainId::DomainBOffset => "DomainB_offset",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            DomainId::DomainADigital => "A",
            DomainId::DomainBOffset => "B",
        }
    }
}

/// Press model. The two presets are plausible stand-ins, not measurements:
/// the offset analog spreads ink more and has coarser grain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrintDomainModel {
    pub domain_id: DomainId,
    /// Ink spread as a Gaussian sigma in pixels.
    pub dot_gain: f64,
    /// Std of the multiplicative ink-density noise.
    pub grain_sigma: f64,
    pub paper_tint: u8,
}

impl PrintDomainModel {
    pub fn preset(domain: DomainId) -> Self {
        match domain {
            DomainId::DomainADigital => Self {
                domain_id: domain,
                dot_gain: 0.6,
                grain_sigma: 0.03,
                paper_tint: 250,
            },
            DomainId::DomainBOffset => Self {
                domain_id: domain,
                dot_gain: 1.1,
                grain_sigma: 0.08,
                paper_tint: 242,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    pub defocus_sigma: f64,
    pub motion_len: f64,
    pub motion_angle: f64,
    pub noise_sigma: f64,
    pub gamma: f64,
    pub illum_gradient: f64,
    pub shift_x: f64,
    pub shift_y: f64,
}

impl DegradationParams {
    pub const IDENTITY: Self = Self {
        defocus_sigma: 0.0,
        motion_len: 0.0,
        motion_angle: 0.0,
        noise_sigma: 0.0,
        gamma: 1.0,
        illum_gradient: 0.0,
        shift_x: 0.0,
        shift_y: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.defocus_sigma,
            self.motion_len,
            self.motion_angle,
            self.noise_sigma,
            self.gamma,
            self.illum_gradient,
            self.shift_x,
            self.shift_y,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("degradation parameters must be finite".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidArgument(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if self.defocus_sigma < 0.0 || self.motion_len < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::InvalidArgument("blur and noise magnitudes must be >= 0".into()));
        }
        if self.shift_x.abs() > 0.5 || self.shift_y.abs() > 0.5 {
            return Err(Error::InvalidArgument("subpixel shifts must lie in [-0.5, 0.5]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    FocusSweep,
    FocusHunt,
    Steady,
    GlarePass,
}

impl TrajectoryKind {
    pub const ALL: [TrajectoryKind; 4] = [
        TrajectoryKind::FocusSweep,
        TrajectoryKind::FocusHunt,
        TrajectoryKind::Steady,
        TrajectoryKind::GlarePass,
    ];
}

#[derive(Clone, Debug, PartialEq)]
pub struct CapturedFrame {
    pub frame_id: String,
    pub session_id: String,
    pub graphic_id: String,
    pub domain_id: DomainId,
    pub image: GrayImage,
    pub params: DegradationParams,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanSession {
    pub session_id: String,
    pub graphic_id: String,
    pub domain_id: DomainId,
    pub trajectory_kind: TrajectoryKind,
    pub frames: Vec<CapturedFrame>,
}

/// Blur by dot gain, multiplicative grain, white remapped to the paper tint,
/// then 8-bit quantization.
pub fn print_simulate(ref_img: &GrayImage, model: &PrintDomainModel, seed: u64) -> GrayImage {
    let mut plane = gaussian_blur(&Plane::from_gray(ref_img), model.dot_gain);
    if model.grain_sigma > 0.0 {
        let grain = Normal::new(0.0, model.grain_sigma).expect("finite sigma");
        let mut rng = seed::rng(seed, "print/grain");
        for v in &mut plane.data {
            *v = (*v * (1.0 + grain.sample(&mut rng))).clamp(0.0, 255.0);
        }
    }
    if model.paper_tint != 255 {
        let scale = f64::from(model.paper_tint) / 255.0;
        for v in &mut plane.data {
            *v *= scale;
        }
    }
    plane.to_gray()
}

/// Line point-spread function of the given length and angle, sampled densely
/// and splatted bilinearly onto the pixel grid.
pub fn motion_kernel(length: f64, angle: f64) -> Plane {
    let r = (length / 2.0).ceil() as usize + 1;
    let side = 2 * r + 1;
    let mut k = Plane::new(side, side, 0.0);
    let steps = ((length * 8.0).ceil() as usize).max(2);
    let (dx, dy) = (angle.cos(), -angle.sin());
    for i in 0..=steps {
        let t = -length / 2.0 + length * i as f64 / steps as f64;
        let x = r as f64 + t * dx;
        let y = r as f64 + t * dy;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (xi, yi) = (x0 as usize, y0 as usize);
        let mut add = |xx: usize, yy: usize, w: f64| {
            if xx < side && yy < side && w > 0.0 {
                let v = k.get(xx, yy);
                k.set(xx, yy, v + w);
            }
        };
        add(xi, yi, (1.0 - fx) * (1.0 - fy));
        add(xi + 1, yi, fx * (1.0 - fy));
        add(xi, yi + 1, (1.0 - fx) * fy);
        add(xi + 1, yi + 1, fx * fy);
    }
    let sum: f64 = k.data.iter().sum();
    k.data.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Fixed order: subpixel shift → defocus → motion → illumination tilt →
/// gamma → additive noise → clip and quantize. Identity parameters return
/// the input unchanged.
pub fn capture_simulate(printed: &GrayImage, p: &DegradationParams, seed: u64) -> Result<GrayImage> {
    p.validate()?;
    let mut plane = Plane::from_gray(printed);
    if p.shift_x != 0.0 || p.shift_y != 0.0 {
        let src = plane.clone();
        plane = Plane::from_fn(src.width, src.height, |x, y| {
            src.sample(x as f64 - p.shift_x, y as f64 - p.shift_y)
        });
    }
    plane = gaussian_blur(&plane, p.defocus_sigma);
    if p.motion_len > 0.0 {
        plane = convolve2d(&plane, &motion_kernel(p.motion_len, p.motion_angle));
    }
    if p.illum_gradient != 0.0 {
        let span = (plane.width.max(2) - 1) as f64;
        let w = plane.width;
        for (i, v) in plane.data.iter_mut().enumerate() {
            let u = (i % w) as f64 / span;
            *v *= 1.0 + p.illum_gradient * (u - 0.5);
        }
    }
    if p.gamma != 1.0 {
        for v in &mut plane.data {
            *v = 255.0 * (v.clamp(0.0, 255.0) / 255.0).powf(p.gamma);
        }
    }
    if p.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, p.noise_sigma).expect("finite sigma");
        let mut rng = seed::rng(seed, "capture/noise");
        for v in &mut plane.data {
            *v += noise.sample(&mut rng);
        }
    }
    Ok(plane.to_gray())
}

/// Per-frame degradation parameters for a session trajectory.
pub fn trajectory(kind: TrajectoryKind, n_frames: usize, seed: u64) -> Vec<DegradationParams> {
    let mut rng = seed::rng(seed, "session/trajectory");
    let span = n_frames.saturating_sub(1).max(1) as f64;
    (0..n_frames)
        .map(|i| {
            let t = i as f64 / span;
            let mut p = DegradationParams {
                defocus_sigma: 0.0,
                motion_len: rng.random_range(0.0..1.5),
                motion_angle: rng.random_range(0.0..PI),
                noise_sigma: rng.random_range(2.0..12.0),
                gamma: rng.random_range(0.8..1.25),
                illum_gradient: rng.random_range(-0.2..0.2),
                shift_x: rng.random_range(-0.5..=0.5),
                shift_y: rng.random_range(-0.5..=0.5),
            };
            match kind {
                TrajectoryKind::FocusSweep => {
                    // geometric decay from 4.5 px to 0.25 px
                    p.defocus_sigma = 4.5 * (0.25f64 / 4.5).powf(t);
                }
                TrajectoryKind::FocusHunt => {
                    let envelope = 3.5 * (-2.5 * t).exp();
                    let phase = 0.5 + 0.5 * (3.0 * PI * t).cos();
                    p.defocus_sigma = 0.3 + envelope * phase + rng.random_range(0.0..0.3);
                    p.motion_len = rng.random_range(0.0..4.0);
                    p.noise_sigma = rng.random_range(4.0..30.0);
                }
                TrajectoryKind::Steady => {
                    // hand-held in poor light
                    p.defocus_sigma = rng.random_range(0.0..0.5);
                    p.noise_sigma = rng.random_range(2.0..45.0);
                    p.gamma = rng.random_range(0.6..1.6);
                }
                TrajectoryKind::GlarePass => {
                    p.defocus_sigma = rng.random_range(0.2..1.5);
                    p.illum_gradient = -1.6 + 3.2 * t;
                    p.gamma = rng.random_range(0.5..1.5);
                    p.noise_sigma = rng.random_range(4.0..30.0);
                    p.motion_len = rng.random_range(0.0..3.0);
                }
            }
            p
        })
        .collect()
}

/// Seed of the physical print of a graphic on a given press; shared by every
/// session that captures it.
pub fn print_seed(reference: &DigitalReference, domain: DomainId) -> u64 {
    seed::derive(reference.seed, &format!("print/{}", domain.as_str()))
}

pub fn generate_session(
    reference: &DigitalReference,
    model: &PrintDomainModel,
    kind: TrajectoryKind,
    n_frames: usize,
    seed: u64,
) -> Result<ScanSession> {
    if n_frames == 0 {
        return Err(Error::InvalidArgument("a session needs at least one frame".into()));
    }
    let printed = print_simulate(&render(reference), model, print_seed(reference, model.domain_id));
    let session_id = format!("{}-{}-{:08x}", reference.graphic_id, model.domain_id.short(), seed as u32);
    generate_session_from_print(reference, &printed, model.domain_id, kind, n_frames, seed, session_id)
}

pub(crate) fn generate_session_from_print(
    reference: &DigitalReference,
    printed: &GrayImage,
    domain: DomainId,
    kind: TrajectoryKind,
    n_frames: usize,
    seed: u64,
    session_id: String,
) -> Result<ScanSession> {
    let params = trajectory(kind, n_frames, seed);
    let frames = params
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let frame_seed = seed::derive(seed, &format!("frame/{i}"));
            Ok(CapturedFrame {
                frame_id: format!("{session_id}-f{i:02}"),
                session_id: session_id.clone(),
                graphic_id: reference.graphic_id.clone(),
                domain_id: domain,
                image: capture_simulate(printed, &p, frame_seed)?,
                params: p,
                seed: frame_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanSession {
        session_id,
        graphic_id: reference.graphic_id.clone(),
        domain_id: domain,
        trajectory_kind: kind,
        frames,
    })
}
