use crate::error::{invalid_param, Result};

/// Uniform pixel grid. `x` is lateral (columns), `z` is axial depth (rows).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGrid {
    pub x0: f64,
    pub dx: f64,
    pub nx: usize,
    pub z0: f64,
    pub dz: f64,
    pub nz: usize,
}

impl BeamGrid {
    pub fn new(x0: f64, dx: f64, nx: usize, z0: f64, dz: f64, nz: usize) -> Result<Self> {
        if nx == 0 || nz == 0 {
            return Err(invalid_param("beamforming grid is empty"));
        }
        if !(dx > 0.0 && dz > 0.0) || !(x0.is_finite() && z0.is_finite()) {
            return Err(invalid_param("grid spacing must be positive and origin finite"));
        }
        Ok(BeamGrid { x0, dx, nx, z0, dz, nz })
    }

    /// Square-pitch grid covering `[x_min, x_max] × [z_min, z_max]` starting at the minimum corner.
    pub fn square(x_min: f64, x_max: f64, z_min: f64, z_max: f64, pitch: f64) -> Result<Self> {
        Self::with_pitches(x_min, x_max, z_min, z_max, pitch, pitch)
    }

    pub fn with_pitches(
        x_min: f64,
        x_max: f64,
        z_min: f64,
        z_max: f64,
        dx: f64,
        dz: f64,
    ) -> Result<Self> {
        if !(x_max >= x_min && z_max >= z_min) {
            return Err(invalid_param("grid bounds are inverted"));
        }
        if !(dx > 0.0 && dz > 0.0) {
            return Err(invalid_param("grid spacing must be positive"));
        }
        let nx = ((x_max - x_min) / dx + 1e-9).floor() as usize + 1;
        let nz = ((z_max - z_min) / dz + 1e-9).floor() as usize + 1;
        Self::new(x_min, dx, nx, z_min, dz, nz)
    }

    pub fn x(&self, col: usize) -> f64 {
        self.x0 + col as f64 * self.dx
    }

    pub fn z(&self, row: usize) -> f64 {
        self.z0 + row as f64 * self.dz
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|j| self.x(j)).collect()
    }

    pub fn zs(&self) -> Vec<f64> {
        (0..self.nz).map(|i| self.z(i)).collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nz, self.nx)
    }

    pub fn is_square(&self) -> bool {
        (self.dx - self.dz).abs() <= 1e-12 * self.dx.max(self.dz)
    }

    /// Keeps every `step`-th row, starting with row 0.
    pub fn decimate_rows(&self, step: usize) -> Result<Self> {
        if step == 0 {
            return Err(invalid_param("decimation step must be at least 1"));
        }
        Self::new(self.x0, self.dx, self.nx, self.z0, self.dz * step as f64, (self.nz - 1) / step + 1)
    }

    pub fn last_x(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn last_z(&self) -> f64 {
        self.z(self.nz - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_grid_spacing() {
        let g = BeamGrid::square(-1e-3, 1e-3, 5e-3, 6e-3, 0.1e-3).unwrap();
        assert_eq!((g.nx, g.nz), (21, 11));
        assert!(g.xs().windows(2).all(|w| w[1] > w[0]));
        assert!((g.last_x() - 1e-3).abs() < 1e-15);
        assert!(g.is_square());
    }

    #[test]
    fn decimation_keeps_first_row() {
        let g = BeamGrid::new(0.0, 1.0, 3, 2.0, 0.25, 17).unwrap();
        let d = g.decimate_rows(4).unwrap();
        assert_eq!(d.nz, 5);
        assert_eq!(d.z(1), 3.0);
        assert!(BeamGrid::new(0.0, 1.0, 0, 0.0, 1.0, 1).is_err());
    }
}
