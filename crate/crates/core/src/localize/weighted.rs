use crate::error::{Result, UlmError};

use super::{Patch, PATCH};

const WEIGHTS: [f64; PATCH] = [-2.0, -1.0, 0.0, 1.0, 2.0];

/// Which line of the patch drives which coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightedAverageMode {
    /// Lateral position from the central row, axial from the central column.
    #[default]
    Matched,
    /// Lateral position from the central (axial) column, axial from the central row.
    Literal,
}

fn centroid(line: [f64; PATCH]) -> Result<f64> {
    let total: f64 = line.iter().sum();
    if !(total > 0.0) {
        return Err(UlmError::FitFailed("zero-sum weighted-average line".into()));
    }
    let moment: f64 = WEIGHTS.iter().zip(&line).map(|(w, v)| w * v).sum();
    Ok((moment / total).clamp(-2.0, 2.0))
}

pub fn refine(patch: &Patch, mode: WeightedAverageMode) -> Result<(f64, f64)> {
    let mid = PATCH / 2;
    let row = patch.values[mid];
    let col: [f64; PATCH] = std::array::from_fn(|r| patch.values[r][mid]);
    let (lateral, axial) = match mode {
        WeightedAverageMode::Matched => (row, col),
        WeightedAverageMode::Literal => (col, row),
    };
    Ok((centroid(lateral)?, centroid(axial)?))
}
