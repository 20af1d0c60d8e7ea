//! Microbubble detection and subpixel localization on beamformed envelope frames.
//!
//! Candidates are the brightest local maxima; each is cropped to a 5×5 patch
//! centered on its peak pixel and refined by one of four methods. Offsets are
//! computed in pixel units and converted to meters through the image grid.

mod detect;
mod gauss;
mod radial;
mod spline;
mod weighted;

pub use detect::{detect_candidates, DetectorParams};
pub use spline::upsample as spline_upsample;
pub use weighted::WeightedAverageMode;

use rayon::prelude::*;
use serde::Serialize;

use crate::beamform::BfImage;
use crate::error::{invalid_param, Result};

/// Patch side length in pixels.
pub const PATCH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    SpInterp,
    GaussFit,
    WeightedAverage,
    RadialSymmetry,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::SpInterp,
        Method::GaussFit,
        Method::WeightedAverage,
        Method::RadialSymmetry,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::SpInterp => "Sp-Interp",
            Method::GaussFit => "Gauss-Fit",
            Method::WeightedAverage => "WA",
            Method::RadialSymmetry => "RS",
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Method::SpInterp => "sp_interp",
            Method::GaussFit => "gauss_fit",
            Method::WeightedAverage => "wa",
            Method::RadialSymmetry => "rs",
        }
    }

    pub fn from_key(key: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.key() == key || m.label().eq_ignore_ascii_case(key))
            .ok_or_else(|| invalid_param(format!("unknown localizer '{key}'")))
    }
}

/// 5×5 window of linear (not log-compressed) intensity around a peak pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub values: [[f64; PATCH]; PATCH],
    /// `(row, col)` of the center pixel in the source image.
    pub center: (usize, usize),
    /// Center pixel position (m).
    pub x: f64,
    pub z: f64,
    pub pitch_x: f64,
    pub pitch_z: f64,
}

impl Patch {
    /// Crops around `(row, col)`; the caller guarantees the window is inside the image.
    pub fn crop(img: &BfImage, row: usize, col: usize) -> Self {
        let h = PATCH / 2;
        let values = std::array::from_fn(|r| std::array::from_fn(|c| img.values[[row + r - h, col + c - h]].max(0.0)));
        Patch {
            values,
            center: (row, col),
            x: img.grid.x(col),
            z: img.grid.z(row),
            pitch_x: img.grid.dx,
            pitch_z: img.grid.dz,
        }
    }

    /// Patch with unit pitch centered at the origin, for synthetic inputs.
    pub fn from_values(values: [[f64; PATCH]; PATCH], pitch: f64) -> Self {
        Patch { values, center: (2, 2), x: 0.0, z: 0.0, pitch_x: pitch, pitch_z: pitch }
    }

    pub fn peak(&self) -> f64 {
        self.values[PATCH / 2][PATCH / 2]
    }
}

/// One localized microbubble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub x: f64,
    pub z: f64,
    pub intensity: f64,
    pub frame_index: usize,
    pub method: Method,
}

/// Subpixel offset `(dx, dz)` in pixels from the patch center.
pub fn refine_offset(patch: &Patch, method: Method, wa_mode: WeightedAverageMode) -> Result<(f64, f64)> {
    match method {
        Method::SpInterp => Ok(spline::refine(patch)),
        Method::GaussFit => gauss::refine(patch),
        Method::WeightedAverage => weighted::refine(patch, wa_mode),
        Method::RadialSymmetry => radial::refine(patch),
    }
}

fn to_detection(patch: &Patch, offset: (f64, f64), frame_index: usize, method: Method) -> Detection {
    Detection {
        x: patch.x + offset.0 * patch.pitch_x,
        z: patch.z + offset.1 * patch.pitch_z,
        intensity: patch.peak(),
        frame_index,
        method,
    }
}

pub fn localize_sp_interp(patch: &Patch, frame_index: usize) -> Detection {
    to_detection(patch, spline::refine(patch), frame_index, Method::SpInterp)
}

pub fn localize_gauss_fit(patch: &Patch, frame_index: usize) -> Result<Detection> {
    Ok(to_detection(patch, gauss::refine(patch)?, frame_index, Method::GaussFit))
}

pub fn localize_weighted_average(
    patch: &Patch,
    frame_index: usize,
    mode: WeightedAverageMode,
) -> Result<Detection> {
    Ok(to_detection(patch, weighted::refine(patch, mode)?, frame_index, Method::WeightedAverage))
}

pub fn localize_radial_symmetry(patch: &Patch, frame_index: usize) -> Result<Detection> {
    Ok(to_detection(patch, radial::refine(patch)?, frame_index, Method::RadialSymmetry))
}

pub fn localize_patch(
    patch: &Patch,
    frame_index: usize,
    method: Method,
    wa_mode: WeightedAverageMode,
) -> Result<Detection> {
    refine_offset(patch, method, wa_mode).map(|o| to_detection(patch, o, frame_index, method))
}

/// Detects candidates and refines each; failed refinements are dropped.
/// Output order follows candidate order (descending intensity).
pub fn localize_frame(
    img: &BfImage,
    frame_index: usize,
    method: Method,
    detector: &DetectorParams,
    wa_mode: WeightedAverageMode,
) -> Vec<Detection> {
    detect_candidates(img, detector)
        .par_iter()
        .filter_map(|p| localize_patch(p, frame_index, method, wa_mode).ok())
        .collect()
}
