//! Natural bicubic-spline upsampling of a 5×5 patch.

use super::{Patch, PATCH};

/// Interpolation steps per pixel.
const UPSAMPLE: usize = 10;
const FINE: usize = (PATCH - 1) * UPSAMPLE + 1;

/// Second derivatives of the natural cubic spline through 5 uniform knots.
fn natural_moments(y: &[f64; PATCH]) -> [f64; PATCH] {
    // Interior equations M[i-1] + 4 M[i] + M[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]),
    // with M[0] = M[4] = 0, solved by the Thomas algorithm.
    let rhs: Vec<f64> = (1..PATCH - 1).map(|i| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1])).collect();
    let n = rhs.len();
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    c_prime[0] = 1.0 / 4.0;
    d_prime[0] = rhs[0] / 4.0;
    for i in 1..n {
        let m = 4.0 - c_prime[i - 1];
        c_prime[i] = 1.0 / m;
        d_prime[i] = (rhs[i] - d_prime[i - 1]) / m;
    }
    let mut moments = [0.0; PATCH];
    moments[n] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        moments[i + 1] = d_prime[i] - c_prime[i] * moments[i + 2];
    }
    moments
}

fn eval_spline(y: &[f64; PATCH], m: &[f64; PATCH], t: f64) -> f64 {
    let i = (t.floor() as usize).min(PATCH - 2);
    let s = t - i as f64;
    let u = 1.0 - s;
    u * y[i] + s * y[i + 1] + ((u * u * u - u) * m[i] + (s * s * s - s) * m[i + 1]) / 6.0
}

fn upsample_line(y: &[f64; PATCH]) -> [f64; FINE] {
    let m = natural_moments(y);
    let mut out = [0.0; FINE];
    for (k, v) in out.iter_mut().enumerate() {
        *v = eval_spline(y, &m, k as f64 / UPSAMPLE as f64);
    }
    out
}

/// Patch interpolated on a 41×41 grid at 0.1 pixel pitch, `[row][col]`.
pub fn upsample(patch: &Patch) -> Vec<[f64; FINE]> {
    let rows: Vec<[f64; FINE]> = patch.values.iter().map(upsample_line).collect();
    let mut fine = vec![[0.0; FINE]; FINE];
    for col in 0..FINE {
        let mut knots = [0.0; PATCH];
        for (k, row) in rows.iter().enumerate() {
            knots[k] = row[col];
        }
        let line = upsample_line(&knots);
        for (row, v) in line.iter().enumerate() {
            fine[row][col] = *v;
        }
    }
    fine
}

/// Offset in pixels `(dx, dz)` of the interpolated maximum; ties go to the
/// smallest row, then the smallest column.
pub fn refine(patch: &Patch) -> (f64, f64) {
    let fine = upsample(patch);
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for (r, row) in fine.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v > best.0 {
                best = (v, r, c);
            }
        }
    }
    let mid = (FINE / 2) as f64;
    (
        (best.2 as f64 - mid) / UPSAMPLE as f64,
        (best.1 as f64 - mid) / UPSAMPLE as f64,
    )
}
