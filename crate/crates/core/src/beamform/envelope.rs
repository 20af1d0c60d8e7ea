use std::sync::Arc;

use rustfft::{num_complex::Complex64, Fft, FftPlanner};

/// Analytic-signal magnitude of real lines of a fixed length.
pub struct EnvelopeDetector {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len: usize,
}

impl EnvelopeDetector {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        EnvelopeDetector {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn envelope(&self, line: &[f64]) -> Vec<f64> {
        assert_eq!(line.len(), self.len, "line length does not match the planned FFT");
        let n = self.len;
        if n == 0 {
            return Vec::new();
        }
        let mut spec: Vec<Complex64> = line.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut spec);
        // One-sided spectrum: positive frequencies doubled, DC and Nyquist kept.
        let positive_end = (n + 1) / 2;
        for bin in spec.iter_mut().take(positive_end).skip(1) {
            *bin *= 2.0;
        }
        let negative_start = n / 2 + 1;
        for bin in spec.iter_mut().skip(negative_start) {
            *bin = Complex64::new(0.0, 0.0);
        }
        self.inverse.process(&mut spec);
        let scale = 1.0 / n as f64;
        spec.iter().map(|c| c.norm() * scale).collect()
    }
}

/// Envelope of a single line.
pub fn hilbert_envelope(line: &[f64]) -> Vec<f64> {
    EnvelopeDetector::new(line.len()).envelope(line)
}
