//! Plane-wave receive beamforming: delay-and-sum and filtered delay-multiply-and-sum.
//!
//! Both beamformers share the delay/apodization front end. Channels are always
//! reduced in ascending element order so every pixel is bit-stable regardless of
//! how columns are scheduled across threads.

mod apodization;
mod envelope;
mod filter;
mod grid;

pub use apodization::{Apodization, ApodizationKind};
pub use envelope::{hilbert_envelope, EnvelopeDetector};
pub use filter::{filtfilt, frequency_response, BandpassSpec};
pub use grid::BeamGrid;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{invalid_input, invalid_param, Result};
use crate::rfsim::RfFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageKind {
    RfGrid,
    Envelope,
    BmodeDb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Beamformer {
    Das,
    Fdmas,
}

impl Beamformer {
    pub fn label(&self) -> &'static str {
        match self {
            Beamformer::Das => "DAS",
            Beamformer::Fdmas => "F-DMAS",
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Beamformer::Das => "das",
            Beamformer::Fdmas => "fdmas",
        }
    }
}

/// Beamformed image, `values[[row, col]]` with rows along depth.
#[derive(Debug, Clone, PartialEq)]
pub struct BfImage {
    pub values: Array2<f64>,
    pub grid: BeamGrid,
    pub kind: ImageKind,
    pub beamformer: Beamformer,
}

impl BfImage {
    pub fn new(values: Array2<f64>, grid: BeamGrid, kind: ImageKind, beamformer: Beamformer) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(invalid_input(format!(
                "image shape {:?} does not match grid {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        Ok(BfImage { values, grid, kind, beamformer })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Keeps every `step`-th row. Only meaningful after envelope detection.
    pub fn decimate_rows(&self, step: usize) -> Result<Self> {
        let grid = self.grid.decimate_rows(step)?;
        let values = Array2::from_shape_fn(grid.shape(), |(r, c)| self.values[[r * step, c]]);
        BfImage::new(values, grid, self.kind, self.beamformer)
    }
}

/// Two-way plane-wave delay (s): transmit leg `z_p` plus receive leg to the element.
pub fn propagation_delay(x_p: f64, z_p: f64, x_i: f64, c: f64) -> Result<f64> {
    if !(z_p > 0.0) {
        return Err(invalid_param(format!("pixel depth must be positive, got {z_p}")));
    }
    Ok(delay(x_p, z_p, x_i, c))
}

#[inline]
fn delay(x_p: f64, z_p: f64, x_i: f64, c: f64) -> f64 {
    (z_p + (x_i - x_p).hypot(z_p)) / c
}

/// Sign-preserving square root.
#[inline]
pub fn signed_sqrt(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.signum() * u.abs().sqrt()
    }
}

/// Sum of all pairwise products `Σ_{i<j} v_i v_j` via `((Σv)² − Σv²) / 2`.
pub fn dmas_pixel(v: &[f64]) -> Result<f64> {
    if v.len() < 2 {
        return Err(invalid_param("DMAS needs at least two channels"));
    }
    Ok(dmas_sum(v))
}

#[inline]
fn dmas_sum(v: &[f64]) -> f64 {
    let (s, s2) = v.iter().fold((0.0, 0.0), |(s, s2), &x| (s + x, s2 + x * x));
    0.5 * (s * s - s2)
}

/// Per-pixel delay/apodization front end shared by both beamformers.
struct Focusing<'a> {
    frame: &'a RfFrame,
    elements: Vec<f64>,
    apod: Apodization,
}

impl<'a> Focusing<'a> {
    fn new(frame: &'a RfFrame, apod: Apodization) -> Result<Self> {
        frame.validate()?;
        if !(apod.f_number > 0.0) {
            return Err(invalid_param("apodization f-number must be positive"));
        }
        Ok(Focusing { frame, elements: frame.probe.element_positions(), apod })
    }

    /// Linearly interpolated channel sample at time `t`; zero outside the record.
    #[inline]
    fn sample(&self, ch: usize, t: f64) -> f64 {
        let probe = &self.frame.probe;
        let pos = (t - self.frame.t0) * probe.fs;
        if pos < 0.0 {
            return 0.0;
        }
        let i0 = pos.floor() as usize;
        if i0 + 1 >= self.frame.n_samples() {
            return 0.0;
        }
        let frac = pos - i0 as f64;
        let a = f64::from(self.frame.samples[[i0, ch]]);
        let b = f64::from(self.frame.samples[[i0 + 1, ch]]);
        a + frac * (b - a)
    }

    /// Fills `out[i] = w_i[p] · u_i(delay(p, i))`.
    fn delayed(&self, x_p: f64, z_p: f64, out: &mut [f64]) {
        let c = self.frame.probe.c;
        for (ch, (slot, &x_i)) in out.iter_mut().zip(&self.elements).enumerate() {
            let w = self.apod.weight(x_i, x_p, z_p);
            *slot = if w == 0.0 { 0.0 } else { w * self.sample(ch, delay(x_p, z_p, x_i, c)) };
        }
    }

    fn n_channels(&self) -> usize {
        self.elements.len()
    }
}

fn check_grid(grid: &BeamGrid) -> Result<()> {
    if grid.nx == 0 || grid.nz == 0 {
        return Err(invalid_param("beamforming grid is empty"));
    }
    if !(grid.z0 > 0.0) {
        return Err(invalid_param("beamforming grid must lie below the probe (z > 0)"));
    }
    Ok(())
}

/// Evaluates `pixel` over the grid column by column in parallel.
fn beamform_columns<F>(grid: &BeamGrid, pixel: F) -> Array2<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let columns: Vec<Vec<f64>> = (0..grid.nx)
        .into_par_iter()
        .map(|col| {
            let mut line = vec![0.0; grid.nz];
            pixel(col, &mut line);
            line
        })
        .collect();
    Array2::from_shape_fn(grid.shape(), |(r, c)| columns[c][r])
}

/// Delay-and-sum image on `grid`.
pub fn das_image(frame: &RfFrame, grid: &BeamGrid, apod: &Apodization) -> Result<BfImage> {
    check_grid(grid)?;
    let focus = Focusing::new(frame, *apod)?;
    let values = beamform_columns(grid, |col, line| {
        let mut buf = vec![0.0; focus.n_channels()];
        let x_p = grid.x(col);
        for (row, out) in line.iter_mut().enumerate() {
            focus.delayed(x_p, grid.z(row), &mut buf);
            *out = buf.iter().sum();
        }
    });
    BfImage::new(values, *grid, ImageKind::RfGrid, Beamformer::Das)
}

/// DMAS image before the bandpass stage (baseband + 2fc components).
pub fn dmas_image(frame: &RfFrame, grid: &BeamGrid, apod: &Apodization) -> Result<BfImage> {
    check_grid(grid)?;
    let focus = Focusing::new(frame, *apod)?;
    let values = beamform_columns(grid, |col, line| {
        let mut buf = vec![0.0; focus.n_channels()];
        let x_p = grid.x(col);
        for (row, out) in line.iter_mut().enumerate() {
            focus.delayed(x_p, grid.z(row), &mut buf);
            buf.iter_mut().for_each(|v| *v = signed_sqrt(*v));
            *out = dmas_sum(&buf);
        }
    });
    BfImage::new(values, *grid, ImageKind::RfGrid, Beamformer::Fdmas)
}

/// Axial sampling rate (Hz) of an RF-grid line: one row is `2 dz / c` of round-trip time.
pub fn axial_sampling_rate(grid: &BeamGrid, c: f64) -> f64 {
    c / (2.0 * grid.dz)
}

/// Filtered DMAS: DMAS followed by a zero-phase bandpass along every axial line.
pub fn fdmas_image(
    frame: &RfFrame,
    grid: &BeamGrid,
    apod: &Apodization,
    bpf: &BandpassSpec,
) -> Result<BfImage> {
    check_grid(grid)?;
    let taps = bpf.design(axial_sampling_rate(grid, frame.probe.c))?;
    let raw = dmas_image(frame, grid, apod)?;
    let columns: Vec<Vec<f64>> = (0..grid.nx)
        .into_par_iter()
        .map(|c| filtfilt(&taps, &raw.values.column(c).to_vec()))
        .collect();
    let values = Array2::from_shape_fn(grid.shape(), |(r, c)| columns[c][r]);
    BfImage::new(values, *grid, ImageKind::RfGrid, Beamformer::Fdmas)
}

pub fn beamform(
    which: Beamformer,
    frame: &RfFrame,
    grid: &BeamGrid,
    apod: &Apodization,
    bpf: &BandpassSpec,
) -> Result<BfImage> {
    match which {
        Beamformer::Das => das_image(frame, grid, apod),
        Beamformer::Fdmas => fdmas_image(frame, grid, apod, bpf),
    }
}

/// Per-column analytic-signal magnitude of an RF-grid image.
pub fn envelope(img: &BfImage) -> Result<BfImage> {
    if img.kind != ImageKind::RfGrid {
        return Err(invalid_input("envelope detection needs an RF-grid image"));
    }
    let detector = EnvelopeDetector::new(img.grid.nz);
    let columns: Vec<Vec<f64>> = (0..img.grid.nx)
        .into_par_iter()
        .map(|c| detector.envelope(&img.values.column(c).to_vec()))
        .collect();
    let values = Array2::from_shape_fn(img.grid.shape(), |(r, c)| columns[c][r]);
    BfImage::new(values, img.grid, ImageKind::Envelope, img.beamformer)
}

/// `20 log10(v / max)` floored at `-dynamic_range_db`.
pub fn log_compress(img: &BfImage, dynamic_range_db: f64) -> Result<BfImage> {
    if img.kind != ImageKind::Envelope {
        return Err(invalid_input("log compression needs an envelope image"));
    }
    if !(dynamic_range_db > 0.0) {
        return Err(invalid_param("dynamic range must be positive"));
    }
    let max = img.max();
    if !(max > 0.0) {
        return Err(invalid_input("cannot log-compress an all-zero image"));
    }
    let values = img
        .values
        .mapv(|v| (20.0 * (v / max).log10()).max(-dynamic_range_db));
    BfImage::new(values, img.grid, ImageKind::BmodeDb, img.beamformer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfsim::{frame_from_scatterers, Probe};

    fn frame(scatterers: &[(f64, f64)]) -> RfFrame {
        frame_from_scatterers(&Probe::default(), 3, 1900, scatterers, None, 0).unwrap()
    }

    #[test]
    fn on_axis_delay() {
        let d = propagation_delay(0.0, 10e-3, 0.0, 1540.0).unwrap();
        assert!((d - 12.987e-6).abs() < 1e-9);
        assert!(propagation_delay(0.0, 0.0, 0.0, 1540.0).is_err());
        let a = propagation_delay(1e-3 + 0.4e-3, 8e-3, 1e-3, 1540.0).unwrap();
        let b = propagation_delay(1e-3 - 0.4e-3, 8e-3, 1e-3, 1540.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn signed_sqrt_values() {
        assert_eq!(signed_sqrt(-4.0), -2.0);
        assert_eq!(signed_sqrt(0.0), 0.0);
        assert_eq!(signed_sqrt(9.0), 3.0);
        for k in -100..=100 {
            let u = k as f64 / 10.0;
            let v = signed_sqrt(u);
            assert!((v * v.abs() - u).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }

    #[test]
    fn dmas_small_cases() {
        assert_eq!(dmas_pixel(&[1.0, 1.0, 1.0]).unwrap(), 3.0);
        assert_eq!(dmas_pixel(&[2.5, -2.5]).unwrap(), -6.25);
        assert!(dmas_pixel(&[1.0]).is_err());
    }

    #[test]
    fn das_of_silence_is_silent() {
        let grid = BeamGrid::square(-1e-3, 1e-3, 9e-3, 11e-3, 0.1e-3).unwrap();
        let f = frame(&[]);
        let img = das_image(&f, &grid, &Apodization::default()).unwrap();
        assert!(img.values.iter().all(|&v| v == 0.0));
        let bpf = BandpassSpec::second_harmonic(f.probe.fc);
        let fine = BeamGrid::with_pitches(-1e-3, 1e-3, 9e-3, 11e-3, 0.1e-3, 98.56e-6 / 16.0).unwrap();
        let img = fdmas_image(&f, &fine, &Apodization::default(), &bpf).unwrap();
        assert!(img.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn das_is_linear() {
        let grid = BeamGrid::square(-1e-3, 1e-3, 8.5e-3, 10.5e-3, 50e-6).unwrap();
        let apod = Apodization::default();
        let a = (0.2e-3, 9e-3);
        let b = (-0.5e-3, 10e-3);
        let ia = das_image(&frame(&[a]), &grid, &apod).unwrap();
        let ib = das_image(&frame(&[b]), &grid, &apod).unwrap();
        let iab = das_image(&frame(&[a, b]), &grid, &apod).unwrap();
        let scale = iab.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let err = (&iab.values - &(&ia.values + &ib.values))
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        // f32 storage of the RF makes the sum exact only to single precision.
        assert!(err <= 1e-5 * scale, "{err} vs {scale}");
    }

    #[test]
    fn fdmas_is_homogeneous_but_not_additive() {
        let probe = Probe::default();
        let grid = BeamGrid::with_pitches(-0.3e-3, 0.3e-3, 9.5e-3, 10.5e-3, 0.1e-3, probe.wavelength() / 16.0).unwrap();
        let apod = Apodization::default();
        let bpf = BandpassSpec::second_harmonic(probe.fc);
        let one = frame(&[(0.0, 10e-3)]);
        let mut two = one.clone();
        two.samples.mapv_inplace(|v| 2.0 * v);
        let a = fdmas_image(&one, &grid, &apod, &bpf).unwrap();
        let peak = a.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        // sign(u)·sqrt|u| pairs multiply back to first order in the amplitude.
        let a2 = fdmas_image(&two, &grid, &apod, &bpf).unwrap();
        let homog = (&a2.values - &(&a.values * 2.0)).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(homog <= 1e-5 * peak, "{homog}");
        // Superposition fails: the cross terms between two scatterers survive.
        let other = frame(&[(0.1e-3, 10.05e-3)]);
        let both = frame(&[(0.0, 10e-3), (0.1e-3, 10.05e-3)]);
        let b = fdmas_image(&other, &grid, &apod, &bpf).unwrap();
        let ab = fdmas_image(&both, &grid, &apod, &bpf).unwrap();
        let diff = (&ab.values - &(&a.values + &b.values)).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(diff > 0.1 * peak, "{diff} vs {peak}");
    }

    #[test]
    fn log_compress_contract() {
        let grid = BeamGrid::new(0.0, 1.0, 3, 1.0, 1.0, 1).unwrap();
        let env = BfImage::new(
            Array2::from_shape_vec((1, 3), vec![10.0, 1.0, 1e-6]).unwrap(),
            grid,
            ImageKind::Envelope,
            Beamformer::Das,
        )
        .unwrap();
        let db = log_compress(&env, 60.0).unwrap();
        assert_eq!(db.values[[0, 0]], 0.0);
        assert!((db.values[[0, 1]] + 20.0).abs() < 1e-12);
        assert_eq!(db.values[[0, 2]], -60.0);
        let zero = BfImage { values: Array2::zeros((1, 3)), ..env.clone() };
        assert!(log_compress(&zero, 60.0).is_err());
        assert!(envelope(&env).is_err());
    }
}
