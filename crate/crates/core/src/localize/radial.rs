//! Radial-symmetry center: the point closest, in weighted least squares, to all
//! lines running through the gradient midpoints along their gradient directions.

use crate::error::{Result, UlmError};

use super::{Patch, PATCH};

const MIDS: usize = PATCH - 1;

/// Gradient `(x, z, gx, gz)` on the 4×4 lattice of 2×2 cell midpoints, in
/// pixel units relative to the patch center. The two diagonal differences of
/// each cell are rotated by 45° into axis-aligned components.
fn midpoint_gradients(patch: &Patch) -> Vec<(f64, f64, f64, f64)> {
    let v = &patch.values;
    let mid = (PATCH / 2) as f64;
    let mut out = Vec::with_capacity(MIDS * MIDS);
    for r in 0..MIDS {
        for c in 0..MIDS {
            // Along (+x, -z) and along (+x, +z).
            let d_up = v[r][c + 1] - v[r + 1][c];
            let d_down = v[r + 1][c + 1] - v[r][c];
            let gx = 0.5 * (d_up + d_down);
            let gz = 0.5 * (d_down - d_up);
            out.push((c as f64 + 0.5 - mid, r as f64 + 0.5 - mid, gx, gz));
        }
    }
    out
}

pub fn refine(patch: &Patch) -> Result<(f64, f64)> {
    let grads = midpoint_gradients(patch);
    let mag2: Vec<f64> = grads.iter().map(|g| g.2 * g.2 + g.3 * g.3).collect();
    let total: f64 = mag2.iter().sum();
    let peak = mag2.iter().fold(0.0_f64, |m, &v| m.max(v));
    if !(total > 0.0) {
        return Err(UlmError::FitFailed("patch has no intensity gradient".into()));
    }
    let cx: f64 = grads.iter().zip(&mag2).map(|(g, w)| g.0 * w).sum::<f64>() / total;
    let cz: f64 = grads.iter().zip(&mag2).map(|(g, w)| g.1 * w).sum::<f64>() / total;

    // Σ w n nᵀ c = Σ w n nᵀ p, with n the unit normal of each gradient line.
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (g, &m2) in grads.iter().zip(&mag2) {
        if m2 <= 1e-24 * peak {
            continue;
        }
        let norm = m2.sqrt();
        let (nx, nz) = (-g.3 / norm, g.2 / norm);
        let dist = (g.0 - cx).hypot(g.1 - cz).max(1e-6);
        let w = m2 / dist;
        let proj = nx * g.0 + nz * g.1;
        a11 += w * nx * nx;
        a12 += w * nx * nz;
        a22 += w * nz * nz;
        b1 += w * nx * proj;
        b2 += w * nz * proj;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det.abs() > 1e-12 * (a11 * a22).abs().max(f64::MIN_POSITIVE)) {
        return Err(UlmError::FitFailed("radial-symmetry system is singular".into()));
    }
    let x = (a22 * b1 - a12 * b2) / det;
    let z = (a11 * b2 - a12 * b1) / det;
    let limit = (PATCH / 2) as f64;
    if !(x.abs() <= limit && z.abs() <= limit) {
        return Err(UlmError::FitFailed("radial-symmetry center outside the patch".into()));
    }
    Ok((x, z))
}
