//! Isotropic 2-D Gaussian + offset fit by damped Gauss-Newton (Levenberg-Marquardt).

use nalgebra::{Matrix5, Vector5};

use crate::error::{Result, UlmError};

use super::{Patch, PATCH};

const MAX_ITER: usize = 100;
const STEP_TOL: f64 = 1e-6;
const SIGMA_MIN: f64 = 0.05;
const SIGMA_MAX: f64 = 5.0;
const SIGMA_INIT: f64 = 0.5;

fn fail(msg: &str) -> UlmError {
    UlmError::FitFailed(msg.to_string())
}

/// Parameters `[A, x0, z0, sigma, b]` in pixel units.
type Params = Vector5<f64>;

fn samples(patch: &Patch) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    let mid = (PATCH / 2) as f64;
    (0..PATCH).flat_map(move |r| {
        (0..PATCH).map(move |c| (c as f64 - mid, r as f64 - mid, patch.values[r][c]))
    })
}

fn cost(patch: &Patch, p: &Params) -> f64 {
    samples(patch)
        .map(|(x, z, v)| {
            let d2 = (x - p[1]).powi(2) + (z - p[2]).powi(2);
            let m = p[0] * (-d2 / (2.0 * p[3] * p[3])).exp() + p[4];
            (m - v).powi(2)
        })
        .sum()
}

fn normal_equations(patch: &Patch, p: &Params) -> (Matrix5<f64>, Vector5<f64>) {
    let mut h = Matrix5::zeros();
    let mut g = Vector5::zeros();
    let s2 = p[3] * p[3];
    for (x, z, v) in samples(patch) {
        let (dx, dz) = (x - p[1], z - p[2]);
        let d2 = dx * dx + dz * dz;
        let e = (-d2 / (2.0 * s2)).exp();
        let r = p[0] * e + p[4] - v;
        let j = Vector5::new(e, p[0] * e * dx / s2, p[0] * e * dz / s2, p[0] * e * d2 / (s2 * p[3]), 1.0);
        h += j * j.transpose();
        g += j * r;
    }
    (h, g)
}

/// Sub-pixel offset `(dx, dz)` of the fitted Gaussian center.
pub fn refine(patch: &Patch) -> Result<(f64, f64)> {
    let values = samples(patch).map(|s| s.2);
    let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let positive = samples(patch).filter(|s| s.2 > 0.0).count();
    if positive < 6 {
        return Err(fail("fewer than 6 positive samples"));
    }
    if !(max - min > 1e-12 * max.abs()) {
        return Err(fail("flat patch has no peak"));
    }

    let mut p = Params::new(max - min, 0.0, 0.0, SIGMA_INIT, min);
    let mut current = cost(patch, &p);
    let mut mu = 1e-3;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let (h, g) = normal_equations(patch, &p);
        let mut damped = h;
        for k in 0..5 {
            damped[(k, k)] += mu * h[(k, k)].max(1e-12);
        }
        let Some(step) = damped.lu().solve(&(-g)) else {
            return Err(fail("singular normal equations"));
        };
        let trial = p + step;
        let trial_cost = if trial[3] > 0.0 { cost(patch, &trial) } else { f64::INFINITY };
        if trial_cost <= current {
            p = trial;
            current = trial_cost;
            mu = (mu / 10.0).max(1e-12);
            let spatial = (step[1].powi(2) + step[2].powi(2) + step[3].powi(2)).sqrt();
            if spatial < STEP_TOL {
                converged = true;
                break;
            }
        } else {
            mu *= 10.0;
            if mu > 1e12 {
                // No descent direction left: already at the minimum.
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(fail("did not converge in 100 iterations"));
    }
    if !(p[3] > SIGMA_MIN && p[3] < SIGMA_MAX) {
        return Err(fail("fitted width out of range"));
    }
    let limit = (PATCH / 2) as f64;
    if p[1].abs() > limit || p[2].abs() > limit {
        return Err(fail("fitted center outside the patch"));
    }
    Ok((p[1], p[2]))
}
