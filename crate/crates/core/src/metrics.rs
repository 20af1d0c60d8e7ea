//! Local contrast score, lateral spread score and the FWHM helper behind it.

use ndarray::{Array2, ArrayView1};
use serde::Serialize;

use crate::error::{invalid_input, Result};

/// Which 2×2 windows feed the contrast statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContrastMode {
    /// Only windows touching a nonzero map value.
    #[default]
    Masked,
    Full,
}

impl ContrastMode {
    pub fn key(&self) -> &'static str {
        match self {
            ContrastMode::Masked => "masked",
            ContrastMode::Full => "full",
        }
    }

    pub fn from_key(key: &str) -> Result<Self> {
        match key {
            "masked" => Ok(ContrastMode::Masked),
            "full" => Ok(ContrastMode::Full),
            _ => Err(invalid_input(format!("unknown contrast mode '{key}'"))),
        }
    }
}

fn normalized(map: &Array2<f64>) -> Result<Array2<f64>> {
    let (r, c) = map.dim();
    if r < 2 || c < 2 {
        return Err(invalid_input(format!("map must be at least 2x2, got {r}x{c}")));
    }
    if map.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid_input("map values must be finite and non-negative"));
    }
    let max = map.iter().fold(0.0_f64, |m, &v| m.max(v));
    if max <= 0.0 {
        return Err(invalid_input("all-zero map cannot be normalized"));
    }
    Ok(map / max)
}

fn window_std(w: [f64; 4]) -> f64 {
    let mean = w.iter().sum::<f64>() / 4.0;
    (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt()
}

fn window(m: &Array2<f64>, r: usize, c: usize) -> [f64; 4] {
    [m[[r, c]], m[[r, c + 1]], m[[r + 1, c]], m[[r + 1, c + 1]]]
}

/// Population std over every 2×2 window of the max-normalized map.
pub fn local_std_image(map: &Array2<f64>) -> Result<Array2<f64>> {
    let m = normalized(map)?;
    let (r, c) = m.dim();
    Ok(Array2::from_shape_fn((r - 1, c - 1), |(i, j)| window_std(window(&m, i, j))))
}

/// Mean and population std of the local std image.
pub fn local_contrast_score(map: &Array2<f64>, mode: ContrastMode) -> Result<(f64, f64)> {
    let m = normalized(map)?;
    let (r, c) = m.dim();
    let mut values = Vec::new();
    for i in 0..r - 1 {
        for j in 0..c - 1 {
            let w = window(&m, i, j);
            if mode == ContrastMode::Full || w.iter().any(|&v| v > 0.0) {
                values.push(window_std(w));
            }
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fwhm {
    pub width: f64,
    pub censored: bool,
}

/// Full width at half maximum of a peaked profile.
pub fn fwhm(profile: &[f64], pitch: f64) -> Result<Fwhm> {
    fwhm_view(ArrayView1::from(profile), pitch)
}

fn fwhm_view(profile: ArrayView1<f64>, pitch: f64) -> Result<Fwhm> {
    if !(pitch > 0.0) {
        return Err(invalid_input("pitch must be positive"));
    }
    if profile.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid_input("profile values must be finite and non-negative"));
    }
    let n = profile.len();
    let mut peak = 0;
    for (k, &v) in profile.iter().enumerate() {
        if v > profile[peak] {
            peak = k;
        }
    }
    if n == 0 || profile[peak] <= 0.0 {
        return Err(invalid_input("all-zero profile has no half maximum"));
    }
    let half = profile[peak] / 2.0;
    let mut censored = false;

    let left = match (0..peak).rev().find(|&k| profile[k] <= half) {
        Some(k) => k as f64 + (half - profile[k]) / (profile[k + 1] - profile[k]),
        None => {
            censored = true;
            0.0
        }
    };
    let right = match (peak + 1..n).find(|&k| profile[k] <= half) {
        Some(k) => k as f64 - (half - profile[k]) / (profile[k - 1] - profile[k]),
        None => {
            censored = true;
            (n - 1) as f64
        }
    };
    Ok(Fwhm { width: (right - left) * pitch, censored })
}

/// Rows `row_start..row_end`, columns `col_start..col_end` of a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Region {
    pub fn whole(map: &Array2<f64>) -> Self {
        let (r, c) = map.dim();
        Region { row_start: 0, row_end: r, col_start: 0, col_end: c }
    }

    pub fn validate(&self, map: &Array2<f64>) -> Result<()> {
        let (r, c) = map.dim();
        if self.row_start >= self.row_end || self.col_start >= self.col_end || self.row_end > r || self.col_end > c {
            return Err(invalid_input(format!(
                "region rows {}..{} cols {}..{} outside a {r}x{c} map",
                self.row_start, self.row_end, self.col_start, self.col_end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralSpread {
    /// Mean FWHM in wavelengths.
    pub lambdas: f64,
    pub rows_used: usize,
    pub rows_censored: usize,
}

/// Mean lateral FWHM along the rows of `region`, in units of `lambda`.
pub fn lateral_spread_score(map: &Array2<f64>, region: Region, pitch: f64, lambda: f64) -> Result<LateralSpread> {
    region.validate(map)?;
    if !(lambda > 0.0) {
        return Err(invalid_input("lambda must be positive"));
    }
    let (mut sum, mut used, mut censored) = (0.0, 0, 0);
    for r in region.row_start..region.row_end {
        let row = map.slice(ndarray::s![r, region.col_start..region.col_end]);
        if row.iter().all(|&v| v == 0.0) {
            continue;
        }
        let f = fwhm_view(row, pitch)?;
        if f.censored {
            censored += 1;
        } else {
            sum += f.width;
            used += 1;
        }
    }
    if used == 0 {
        return Err(invalid_input(format!(
            "no uncensored rows in the region ({censored} censored)"
        )));
    }
    Ok(LateralSpread { lambdas: sum / used as f64 / lambda, rows_used: used, rows_censored: censored })
}

/// Column sums over the rows of `region`, divided by the row count.
pub fn mean_lateral_profile(map: &Array2<f64>, region: Region) -> Result<Vec<f64>> {
    region.validate(map)?;
    let n = (region.row_end - region.row_start) as f64;
    Ok((region.col_start..region.col_end)
        .map(|c| (region.row_start..region.row_end).map(|r| map[[r, c]]).sum::<f64>() / n)
        .collect())
}

/// Indices of distinct ridges in a lateral profile, ascending.
///
/// A ridge is an interior local maximum of at least `min_rel` times the profile
/// maximum. Ridges closer than `min_separation` samples to a stronger one are dropped.
pub fn ridge_peaks(profile: &[f64], min_separation: usize, min_rel: f64) -> Vec<usize> {
    let max = profile.iter().fold(0.0_f64, |m, &v| m.max(v));
    if profile.len() < 3 || max <= 0.0 {
        return Vec::new();
    }
    let mut peaks: Vec<usize> = (1..profile.len() - 1)
        .filter(|&i| profile[i] >= min_rel * max && profile[i] > profile[i - 1] && profile[i] >= profile[i + 1])
        .collect();
    peaks.sort_by(|&a, &b| profile[b].total_cmp(&profile[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for p in peaks {
        if kept.iter().all(|&k| k.abs_diff(p) >= min_separation) {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    kept
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub beamformer: String,
    pub localizer: String,
    pub local_contrast_mean: f64,
    pub local_contrast_std: f64,
    /// NaN when no region was scored.
    pub lateral_spread_lambda: f64,
}

/// Both metrics on one map; an unscorable region leaves the spread as NaN.
pub fn evaluate_map(
    map: &Array2<f64>,
    mode: ContrastMode,
    region: Option<Region>,
    pitch: f64,
    lambda: f64,
    beamformer: &str,
    localizer: &str,
) -> Result<MetricReport> {
    let (mean, std) = if map.iter().any(|&v| v > 0.0) {
        local_contrast_score(map, mode)?
    } else {
        (0.0, 0.0)
    };
    let spread = match region {
        Some(reg) => lateral_spread_score(map, reg, pitch, lambda).map(|s| s.lambdas).unwrap_or(f64::NAN),
        None => f64::NAN,
    };
    Ok(MetricReport {
        beamformer: beamformer.to_string(),
        localizer: localizer.to_string(),
        local_contrast_mean: mean,
        local_contrast_std: std,
        lateral_spread_lambda: spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn single_corner_window() {
        let m = ndarray::array![[1.0, 0.0], [0.0, 0.0]];
        let s = local_std_image(&m).unwrap();
        assert_eq!(s.dim(), (1, 1));
        assert_relative_eq!(s[[0, 0]], 0.4330127018922193, epsilon = 1e-12);
        assert_relative_eq!(s[[0, 0]], (3.0_f64 * 0.0625 + 0.5625).sqrt() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_map_scores_zero() {
        let m = Array2::from_elem((5, 4), 3.0);
        assert!(local_std_image(&m).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(local_contrast_score(&m, ContrastMode::Masked).unwrap(), (0.0, 0.0));
        assert!(local_std_image(&Array2::zeros((3, 3))).is_err());
    }

    #[test]
    fn random_map_matches_window_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let m = Array2::from_shape_fn((6, 6), |_| rng.gen_range(0.0..5.0));
        let max = m.iter().cloned().fold(0.0, f64::max);
        let s = local_std_image(&m).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                let w: Vec<f64> = [(0, 0), (0, 1), (1, 0), (1, 1)].iter().map(|(a, b)| m[[r + a, c + b]] / max).collect();
                let mu = w.iter().sum::<f64>() / 4.0;
                let sd = (w.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 4.0).sqrt();
                assert!((s[[r, c]] - sd).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_spike_uses_touching_windows() {
        let mut m = Array2::zeros((5, 5));
        m[[2, 2]] = 1.0;
        let (mean, std) = local_contrast_score(&m, ContrastMode::Masked).unwrap();
        // Four windows touch the spike, each scoring the corner value.
        assert_relative_eq!(mean, 0.4330127018922193, epsilon = 1e-12);
        assert!(std.abs() < 1e-12);
        let (full, _) = local_contrast_score(&m, ContrastMode::Full).unwrap();
        assert_relative_eq!(full, 4.0 * 0.4330127018922193 / 16.0, epsilon = 1e-12);
    }

    fn blur(m: &Array2<f64>, sigma: f64) -> Array2<f64> {
        let (r, c) = m.dim();
        let rad = (3.0 * sigma).ceil() as isize;
        Array2::from_shape_fn((r, c), |(i, j)| {
            let mut acc = 0.0;
            for di in -rad..=rad {
                for dj in -rad..=rad {
                    let (ii, jj) = (i as isize + di, j as isize + dj);
                    if ii >= 0 && jj >= 0 && (ii as usize) < r && (jj as usize) < c {
                        acc += m[[ii as usize, jj as usize]] * (-((di * di + dj * dj) as f64) / (2.0 * sigma * sigma)).exp();
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn blur_lowers_contrast() {
        let mut m = Array2::zeros((40, 40));
        for r in 0..40 {
            m[[r, 12]] = 1.0;
            m[[r, 13]] = 1.0;
            m[[r, 28]] = 1.0;
        }
        let sharp = local_contrast_score(&m, ContrastMode::Masked).unwrap().0;
        let soft = local_contrast_score(&blur(&m, 2.0), ContrastMode::Masked).unwrap().0;
        assert!(sharp > soft, "{sharp} vs {soft}");
    }

    #[test]
    fn contrast_is_scale_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let m = Array2::from_shape_fn((7, 9), |_| if rng.gen_bool(0.3) { rng.gen_range(0.0..2.0) } else { 0.0 });
        for mode in [ContrastMode::Masked, ContrastMode::Full] {
            let a = local_contrast_score(&m, mode).unwrap();
            let b = local_contrast_score(&(&m * 17.5), mode).unwrap();
            assert_relative_eq!(a.0, b.0, epsilon = 1e-12);
            assert_relative_eq!(a.1, b.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn fwhm_examples() {
        let p = 0.3e-3;
        let tri = fwhm(&[0.0, 0.5, 1.0, 0.5, 0.0], p).unwrap();
        assert_relative_eq!(tri.width, 2.0 * p, epsilon = 1e-15);
        assert!(!tri.censored);
        let imp = fwhm(&[0.0, 1.0, 0.0], p).unwrap();
        assert_relative_eq!(imp.width, p, epsilon = 1e-15);
        let flat = fwhm(&[2.0; 6], p).unwrap();
        assert!(flat.censored);
        assert_relative_eq!(flat.width, 5.0 * p, epsilon = 1e-15);
        assert!(fwhm(&[0.0; 4], p).is_err());
    }

    #[test]
    fn fwhm_is_scale_invariant() {
        let prof = [0.1, 0.3, 0.8, 1.0, 0.6, 0.2, 0.05];
        let doubled: Vec<f64> = prof.iter().map(|v| v + v).collect();
        assert_eq!(fwhm(&prof, 1.0).unwrap(), fwhm(&doubled, 1.0).unwrap());
    }

    fn ridge(rows: usize, cols: usize, col: usize) -> Array2<f64> {
        let mut m = Array2::zeros((rows, cols));
        m.column_mut(col).fill(1.0);
        m
    }

    #[test]
    fn binary_ridge_spread_is_one_bin() {
        let lambda = 1540.0 / 15.625e6;
        let pitch = 0.1 * lambda;
        let m = ridge(20, 15, 7);
        let s = lateral_spread_score(&m, Region::whole(&m), pitch, lambda).unwrap();
        assert_relative_eq!(s.lambdas, 0.1, epsilon = 1e-12);
        assert_eq!(s.rows_used, 20);
        let blurred = m.map(|_| 0.0) + &Array2::from_shape_fn((20, 15), |(_, c)| {
            (-((c as f64 - 7.0).powi(2)) / 2.0).exp()
        });
        let wide = lateral_spread_score(&blurred, Region::whole(&blurred), pitch, lambda).unwrap();
        assert!(wide.lambdas > s.lambdas);
    }

    #[test]
    fn spread_invariances_and_errors() {
        let mut m = Array2::zeros((30, 12));
        for r in 0..30 {
            m[[r, 4]] = 0.5;
            m[[r, 5]] = 1.0;
            m[[r, 6]] = 0.25;
        }
        let reg = Region { row_start: 2, row_end: 12, col_start: 0, col_end: 12 };
        let a = lateral_spread_score(&m, reg, 1.0, 1.0).unwrap();
        let b = lateral_spread_score(&(&m * 9.0), reg, 1.0, 1.0).unwrap();
        let shifted = Region { row_start: 15, row_end: 25, ..reg };
        let c = lateral_spread_score(&m, shifted, 1.0, 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let constant = Array2::from_elem((4, 4), 1.0);
        assert!(lateral_spread_score(&constant, Region::whole(&constant), 1.0, 1.0).is_err());
        let out = Region { row_start: 0, row_end: 40, col_start: 0, col_end: 2 };
        assert!(lateral_spread_score(&m, out, 1.0, 1.0).is_err());
    }

    #[test]
    fn two_ridges_found_and_merged() {
        let p = [0.0, 1.0, 0.2, 0.1, 0.9, 0.0];
        assert_eq!(ridge_peaks(&p, 3, 0.2), vec![1, 4]);
        assert_eq!(ridge_peaks(&p, 4, 0.2), vec![1]);
        assert_eq!(ridge_peaks(&p, 3, 0.95), vec![1]);
        assert!(ridge_peaks(&[0.0; 5], 1, 0.2).is_empty());
    }

    #[test]
    fn plateau_counts_once() {
        assert_eq!(ridge_peaks(&[0.0, 1.0, 1.0, 0.0], 1, 0.2), vec![1]);
    }

    #[test]
    fn mean_profile_averages_rows() {
        let m = Array2::from_shape_fn((4, 3), |(r, c)| (r * 3 + c) as f64);
        let reg = Region { row_start: 1, row_end: 3, col_start: 1, col_end: 3 };
        assert_eq!(mean_lateral_profile(&m, reg).unwrap(), vec![5.5, 6.5]);
    }
}
