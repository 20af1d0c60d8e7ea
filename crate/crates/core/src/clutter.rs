//! Spatiotemporal SVD clutter filter on the Casorati (pixels × frames) matrix.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::beamform::BfImage;
use crate::error::{invalid_input, invalid_param, Result};

/// Frames of a common grid and kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    pub frames: Vec<BfImage>,
}

impl ImageStack {
    pub fn new(frames: Vec<BfImage>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(invalid_input("an image stack needs at least two frames"));
        }
        let first = &frames[0];
        if frames.iter().any(|f| f.grid != first.grid || f.kind != first.kind) {
            return Err(invalid_input("stack frames must share grid and kind"));
        }
        Ok(ImageStack { frames })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.frames[0].values.len()
    }

    /// Pixels × frames matrix; column `t` is frame `t` in row-major pixel order.
    pub fn casorati(&self) -> DMatrix<f64> {
        let nx = self.frames[0].grid.nx;
        DMatrix::from_fn(self.n_pixels(), self.n_frames(), |i, t| {
            self.frames[t].values[[i / nx, i % nx]]
        })
    }

    fn from_casorati(&self, m: &DMatrix<f64>) -> ImageStack {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let mut out = f.clone();
                for (v, i) in out.values.iter_mut().zip(0..) {
                    *v = m[(i, t)];
                }
                out
            })
            .collect();
        ImageStack { frames }
    }
}

/// Eigenpairs sorted by descending eigenvalue; ties keep the lower original index first.
fn sorted_eigen(gram: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, j| {
        eig.eigenvectors[(i, order[j])]
    });
    (values, vectors)
}

/// Squared singular values of the Casorati matrix, descending.
pub fn singular_values_squared(stack: &ImageStack) -> Vec<f64> {
    let s = stack.casorati();
    let gram = if s.ncols() <= s.nrows() { s.transpose() * &s } else { &s * s.transpose() };
    sorted_eigen(gram).0
}

/// Removes the `cut_low` largest and `cut_high` smallest singular components.
pub fn svd_filter(stack: &ImageStack, cut_low: usize, cut_high: usize) -> Result<ImageStack> {
    let (p, t) = (stack.n_pixels(), stack.n_frames());
    let rank = p.min(t);
    if cut_low + cut_high >= rank {
        return Err(invalid_param(format!(
            "cutoffs {cut_low} + {cut_high} must stay below min(pixels, frames) = {rank}"
        )));
    }
    if cut_low == 0 && cut_high == 0 {
        return Ok(stack.clone());
    }
    let s = stack.casorati();
    let keep = cut_low..rank - cut_high;
    let filtered = if t <= p {
        // Project onto the retained right singular vectors: S V_k V_kᵀ.
        let (_, v) = sorted_eigen(s.transpose() * &s);
        let vk = v.columns(keep.start, keep.len()).into_owned();
        &s * &vk * vk.transpose()
    } else {
        // Project onto the retained left singular vectors: U_k U_kᵀ S.
        let (_, u) = sorted_eigen(&s * s.transpose());
        let uk = u.columns(keep.start, keep.len()).into_owned();
        &uk * (uk.transpose() * &s)
    };
    Ok(stack.from_casorati(&filtered))
}

/// Frobenius energy of a stack.
pub fn energy(stack: &ImageStack) -> f64 {
    stack.frames.iter().flat_map(|f| f.values.iter()).map(|v| v * v).sum()
}
