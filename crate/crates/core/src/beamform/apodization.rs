#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApodizationKind {
    Rect,
    Hann,
}

/// Receive apodization restricted to the f-number acceptance cone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Apodization {
    pub kind: ApodizationKind,
    pub f_number: f64,
}

impl Default for Apodization {
    fn default() -> Self {
        Apodization { kind: ApodizationKind::Hann, f_number: 1.0 }
    }
}

impl Apodization {
    /// Weight in `[0, 1]` of the element at `x_i` for the pixel at `(x_p, z_p)`.
    /// Zero outside the active half-aperture `z_p / (2 f#)`.
    pub fn weight(&self, x_i: f64, x_p: f64, z_p: f64) -> f64 {
        let half = z_p / (2.0 * self.f_number);
        let d = (x_i - x_p).abs();
        if !(half > 0.0) || d > half {
            return 0.0;
        }
        match self.kind {
            ApodizationKind::Rect => 1.0,
            ApodizationKind::Hann => {
                let c = (std::f64::consts::FRAC_PI_2 * d / half).cos();
                c * c
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn weights_vanish_outside_acceptance(
            xi in -7e-3..7e-3f64, xp in -3e-3..3e-3f64, zp in 1e-3..12e-3f64,
            fnum in 0.5..3.0f64, hann in any::<bool>(),
        ) {
            let kind = if hann { ApodizationKind::Hann } else { ApodizationKind::Rect };
            let w = Apodization { kind, f_number: fnum }.weight(xi, xp, zp);
            prop_assert!((0.0..=1.0).contains(&w));
            if (xi - xp).abs() > zp / (2.0 * fnum) {
                prop_assert_eq!(w, 0.0);
            }
        }
    }

    #[test]
    fn hann_peaks_on_axis() {
        let a = Apodization::default();
        assert_eq!(a.weight(1e-3, 1e-3, 10e-3), 1.0);
        assert!(a.weight(5e-3, 0.0, 10e-3) < 1e-30);
    }
}
