//! Linear-phase FIR bandpass and zero-phase (forward-backward) application.

use std::f64::consts::PI;

use crate::error::{invalid_param, Result};

/// Bandpass used to isolate the second-harmonic band of DMAS output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandpassSpec {
    /// Passband center (Hz).
    pub center: f64,
    /// Passband width divided by `center`.
    pub fractional_bandwidth: f64,
    /// Odd tap count, so the group delay is an integer number of samples.
    pub n_taps: usize,
}

impl BandpassSpec {
    /// 63-tap filter at `2 fc` with 60 % fractional bandwidth.
    pub fn second_harmonic(fc: f64) -> Self {
        BandpassSpec { center: 2.0 * fc, fractional_bandwidth: 0.6, n_taps: 63 }
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.center > 0.0 && self.center < fs / 2.0) {
            return Err(invalid_param(format!(
                "bandpass center {} Hz must lie in (0, {} Hz)",
                self.center,
                fs / 2.0
            )));
        }
        if self.n_taps % 2 == 0 || self.n_taps < 3 {
            return Err(invalid_param("bandpass tap count must be odd and at least 3"));
        }
        if !(self.fractional_bandwidth > 0.0 && self.fractional_bandwidth < 2.0) {
            return Err(invalid_param("fractional bandwidth must lie in (0, 2)"));
        }
        Ok(())
    }

    /// Hamming-windowed sinc taps for sampling rate `fs`, unit gain at `center`.
    pub fn design(&self, fs: f64) -> Result<Vec<f64>> {
        self.validate(fs)?;
        let half_bw = 0.5 * self.fractional_bandwidth * self.center;
        let f1 = ((self.center - half_bw) / fs).max(0.0);
        let f2 = ((self.center + half_bw) / fs).min(0.5);
        let n = self.n_taps;
        let mid = (n - 1) as f64 / 2.0;
        let mut taps: Vec<f64> = (0..n)
            .map(|k| {
                let m = k as f64 - mid;
                let ideal = 2.0 * f2 * sinc(2.0 * f2 * m) - 2.0 * f1 * sinc(2.0 * f1 * m);
                let w = 0.54 - 0.46 * (2.0 * PI * k as f64 / (n - 1) as f64).cos();
                ideal * w
            })
            .collect();
        let gain = frequency_response(&taps, self.center / fs);
        taps.iter_mut().for_each(|t| *t /= gain);
        Ok(taps)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Magnitude response of FIR taps at normalized frequency `f` (cycles/sample).
pub fn frequency_response(taps: &[f64], f: f64) -> f64 {
    let (re, im) = taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, &h)| {
        let phase = -2.0 * PI * f * k as f64;
        (re + h * phase.cos(), im + h * phase.sin())
    });
    re.hypot(im)
}

fn causal_fir(taps: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            taps.iter()
                .enumerate()
                .take(n + 1)
                .map(|(k, &h)| h * x[n - k])
                .sum()
        })
        .collect()
}

/// Forward-backward FIR filtering with mirror padding at both ends.
/// The result has zero phase and magnitude response `|H|²`.
pub fn filtfilt(taps: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = (3 * (taps.len() - 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| x[k]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|k| x[n - 1 - k]));

    let mut y = causal_fir(taps, &ext);
    y.reverse();
    let mut y = causal_fir(taps, &y);
    y.reverse();
    y[pad..pad + n].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passband_gain_and_stopband() {
        let fs = 8.0 * 15.625e6;
        let spec = BandpassSpec::second_harmonic(15.625e6);
        let taps = spec.design(fs).unwrap();
        assert_eq!(taps.len(), 63);
        assert!((frequency_response(&taps, spec.center / fs) - 1.0).abs() < 1e-12);
        assert!(frequency_response(&taps, 0.0) < 1e-2);
        // Linear phase: symmetric taps.
        assert!(taps.iter().zip(taps.iter().rev()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn rejects_center_above_nyquist() {
        let spec = BandpassSpec::second_harmonic(15.625e6);
        assert!(spec.design(60e6).is_err());
        let even = BandpassSpec { n_taps: 64, ..spec };
        assert!(even.design(125e6).is_err());
    }

    #[test]
    fn zero_phase_preserves_symmetric_peak() {
        let fs = 125e6;
        let taps = BandpassSpec::second_harmonic(15.625e6).design(fs).unwrap();
        let n = 601;
        let center = 287.0;
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let t = (k as f64 - center) / fs;
                (-(t * 40e6).powi(2)).exp() * (2.0 * PI * 31.25e6 * t).cos()
            })
            .collect();
        let y = filtfilt(&taps, &x);
        let peak = (0..n).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
        assert_eq!(peak, center as usize);
    }

    #[test]
    fn short_and_empty_lines() {
        let taps = vec![0.25, 0.5, 0.25];
        assert!(filtfilt(&taps, &[]).is_empty());
        assert_eq!(filtfilt(&taps, &[2.0]).len(), 1);
        assert!(filtfilt(&taps, &[0.0; 10]).iter().all(|&v| v == 0.0));
    }
}
