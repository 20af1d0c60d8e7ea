use crate::beamform::{BfImage, ImageKind};

use super::{Patch, PATCH};

/// Candidate selection policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub max_count: usize,
    /// Peaks within this Chebyshev distance of an accepted peak are suppressed.
    pub min_separation_px: usize,
    /// Minimum peak value as a fraction of the image maximum.
    pub threshold_rel: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams { max_count: 30, min_separation_px: 3, threshold_rel: 0.3 }
    }
}

fn is_local_max(img: &BfImage, r: usize, c: usize) -> bool {
    let (nz, nx) = img.grid.shape();
    let v = img.values[[r, c]];
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (rr, cc) = (r as i64 + dr, c as i64 + dc);
            if rr < 0 || cc < 0 || rr >= nz as i64 || cc >= nx as i64 {
                continue;
            }
            if img.values[[rr as usize, cc as usize]] > v {
                return false;
            }
        }
    }
    true
}

/// Greedy peak picking in descending intensity (ties by row-major pixel index).
/// Peaks too close to the border for a full 5×5 patch still suppress their
/// neighborhood but are not returned.
pub fn detect_candidates(img: &BfImage, params: &DetectorParams) -> Vec<Patch> {
    if img.kind == ImageKind::RfGrid || params.max_count == 0 {
        return Vec::new();
    }
    let (nz, nx) = img.grid.shape();
    let global = img.max();
    if !(global > 0.0) {
        return Vec::new();
    }
    let floor = params.threshold_rel * global;
    let mut peaks: Vec<(f64, usize, usize)> = Vec::new();
    for r in 0..nz {
        for c in 0..nx {
            let v = img.values[[r, c]];
            if v > 0.0 && v >= floor && is_local_max(img, r, c) {
                peaks.push((v, r, c));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));

    let half = PATCH / 2;
    let sep = params.min_separation_px;
    let mut accepted: Vec<(usize, usize)> = Vec::new();
    let mut patches = Vec::new();
    for (_, r, c) in peaks {
        if accepted.iter().any(|&(ar, ac)| ar.abs_diff(r) <= sep && ac.abs_diff(c) <= sep) {
            continue;
        }
        accepted.push((r, c));
        if r < half || c < half || r + half >= nz || c + half >= nx {
            continue;
        }
        patches.push(Patch::crop(img, r, c));
        if patches.len() == params.max_count {
            break;
        }
    }
    patches
}
