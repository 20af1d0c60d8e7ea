use ndarray::Array2;
use rayon::prelude::*;

use crate::beamform::BeamGrid;
use crate::clutter::ImageStack;
use crate::error::{invalid_input, invalid_param, Result};

use super::Track;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Density,
    Velocity,
    PowerDoppler,
}

/// Super-resolved raster. Bin `(r, c)` covers
/// `[x0 + c·dx − dx/2, x0 + (c+1)·dx − dx/2)` laterally (grid coordinates are bin centers).
#[derive(Debug, Clone, PartialEq)]
pub struct SuperResMap {
    pub grid: BeamGrid,
    pub values: Array2<f64>,
    pub kind: MapKind,
    /// Resampled points that fell outside the grid.
    pub out_of_grid: usize,
}

impl SuperResMap {
    pub fn total(&self) -> f64 {
        self.values.sum()
    }
}

/// Track points resampled at `<= step` arc length, each with the speed of its segment.
pub fn resample_track(track: &Track, step: f64) -> Vec<(f64, f64, f64)> {
    let d = &track.detections;
    let mut out = Vec::new();
    for k in 0..d.len().saturating_sub(1) {
        let (a, b) = (&d[k], &d[k + 1]);
        let len = (b.x - a.x).hypot(b.z - a.z);
        let n = ((len / step).ceil() as usize).max(1);
        let speed = track.velocities.get(k).map_or(0.0, |v| v.0.hypot(v.1));
        for i in 0..n {
            let t = i as f64 / n as f64;
            out.push((a.x + t * (b.x - a.x), a.z + t * (b.z - a.z), speed));
        }
    }
    if let Some(last) = d.last() {
        let speed = track.velocities.last().map_or(0.0, |v| v.0.hypot(v.1));
        out.push((last.x, last.z, speed));
    }
    out
}

fn bin_of(grid: &BeamGrid, x: f64, z: f64) -> Option<(usize, usize)> {
    let col = ((x - (grid.x0 - 0.5 * grid.dx)) / grid.dx).floor();
    let row = ((z - (grid.z0 - 0.5 * grid.dz)) / grid.dz).floor();
    if col < 0.0 || row < 0.0 || col >= grid.nx as f64 || row >= grid.nz as f64 {
        return None;
    }
    Some((row as usize, col as usize))
}

/// Per-track binned samples, computed in parallel and returned in track order.
fn binned(tracks: &[Track], grid: &BeamGrid) -> Vec<(Vec<((usize, usize), f64)>, usize)> {
    let step = grid.dx.min(grid.dz);
    tracks
        .par_iter()
        .map(|t| {
            let mut inside = Vec::new();
            let mut outside = 0;
            for (x, z, speed) in resample_track(t, step) {
                match bin_of(grid, x, z) {
                    Some(bin) => inside.push((bin, speed)),
                    None => outside += 1,
                }
            }
            (inside, outside)
        })
        .collect()
}

fn check_grid(grid: &BeamGrid) -> Result<()> {
    if grid.nx == 0 || grid.nz == 0 {
        return Err(invalid_param("map grid is empty"));
    }
    Ok(())
}

/// Counts of resampled track points per bin.
pub fn render_density(tracks: &[Track], grid: &BeamGrid) -> Result<SuperResMap> {
    check_grid(grid)?;
    let mut values = Array2::zeros(grid.shape());
    let mut out_of_grid = 0;
    for (inside, outside) in binned(tracks, grid) {
        for (bin, _) in inside {
            values[bin] += 1.0;
        }
        out_of_grid += outside;
    }
    Ok(SuperResMap { grid: *grid, values, kind: MapKind::Density, out_of_grid })
}

/// Mean speed per bin divided by the map maximum (all-zero when empty).
pub fn render_velocity(tracks: &[Track], grid: &BeamGrid) -> Result<SuperResMap> {
    check_grid(grid)?;
    let mut sum = Array2::<f64>::zeros(grid.shape());
    let mut count = Array2::<f64>::zeros(grid.shape());
    let mut out_of_grid = 0;
    for (inside, outside) in binned(tracks, grid) {
        for (bin, speed) in inside {
            sum[bin] += speed;
            count[bin] += 1.0;
        }
        out_of_grid += outside;
    }
    let mut mean = Array2::from_shape_fn(grid.shape(), |ix| {
        if count[ix] > 0.0 {
            sum[ix] / count[ix]
        } else {
            0.0
        }
    });
    let max = mean.iter().fold(0.0_f64, |m, &v| m.max(v));
    if max > 0.0 {
        mean.mapv_inplace(|v| v / max);
    }
    Ok(SuperResMap { grid: *grid, values: mean, kind: MapKind::Velocity, out_of_grid })
}

/// Power Doppler of a clutter-filtered stack.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDoppler {
    pub grid: BeamGrid,
    /// Mean over frames of `value²`.
    pub power: Array2<f64>,
    /// `10 log10(power / max)`; `-inf` where the power is zero.
    pub db: Array2<f64>,
}

pub fn power_doppler(stack: &ImageStack) -> Result<PowerDoppler> {
    if stack.n_frames() < 2 {
        return Err(invalid_input("power Doppler needs at least two frames"));
    }
    let grid = stack.frames[0].grid;
    let mut power = Array2::<f64>::zeros(grid.shape());
    for f in &stack.frames {
        power.zip_mut_with(&f.values, |p, &v| *p += v * v);
    }
    let n = stack.n_frames() as f64;
    power.mapv_inplace(|p| p / n);
    let max = power.iter().fold(0.0_f64, |m, &v| m.max(v));
    let db = power.mapv(|p| if max > 0.0 { 10.0 * (p / max).log10() } else { f64::NEG_INFINITY });
    Ok(PowerDoppler { grid, power, db })
}
