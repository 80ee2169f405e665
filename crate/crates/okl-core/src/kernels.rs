//! Scalar input kernels and Gram-matrix computation.

use thiserror::Error;

use crate::dataio::{GramMatrix, MultiTaskDataset, SparseVec};
use crate::mat::SquareMat;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("rbf gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("operation requires explicit features; kernel is precomputed")]
    Precomputed,
    #[error("dataset has no feature vectors")]
    NoFeatures,
    #[error("input has dimension {got}, training data has dimension {expected}")]
    DimensionMismatch { expected: u32, got: u32 },
    #[error("computed Gram failed validation: {0}")]
    InvalidGram(#[from] crate::dataio::DataError),
}

/// The scalar kernel `k(x, z)` shared by all tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `k(x, z) = <x, z>`
    Linear,
    /// `k(x, z) = exp(-gamma * ||x - z||^2)`
    Rbf { gamma: f64 },
    /// Kernel evaluations supplied as a Gram matrix file.
    Precomputed,
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self, KernelError> {
        if gamma > 0.0 {
            Ok(KernelSpec::Rbf { gamma })
        } else {
            Err(KernelError::BadGamma(gamma))
        }
    }

    pub fn is_precomputed(&self) -> bool {
        matches!(self, KernelSpec::Precomputed)
    }

    pub(crate) fn eval(&self, a: &SparseVec, b: &SparseVec) -> f64 {
        match *self {
            KernelSpec::Linear => a.dot(b),
            KernelSpec::Rbf { gamma } => (-gamma * a.sq_dist(b)).exp(),
            KernelSpec::Precomputed => unreachable!("precomputed kernels are never evaluated"),
        }
    }
}

/// Computes the full Gram matrix `k_ij = k(x_i, x_j)`.
///
/// Entries are evaluated once for `i <= j` and mirrored, so the result is
/// symmetric by construction; the [`GramMatrix`] invariants are still checked.
pub fn gram(dataset: &MultiTaskDataset, spec: &KernelSpec) -> Result<GramMatrix, KernelError> {
    if spec.is_precomputed() {
        return Err(KernelError::Precomputed);
    }
    let feats = dataset.features().ok_or(KernelError::NoFeatures)?;
    let n = feats.len();
    let mut mat = SquareMat::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = spec.eval(&feats[i], &feats[j]);
            mat.set(i, j, v);
            mat.set(j, i, v);
        }
    }
    // symmetric by construction; the PSD probe guards against degenerate input
    Ok(GramMatrix::from_mat(mat)?)
}

/// Kernel evaluations `k(x_j, x_new)` against every training sample.
pub fn kernel_row(
    spec: &KernelSpec,
    train: &[SparseVec],
    x_new: &SparseVec,
) -> Result<Vec<f64>, KernelError> {
    if spec.is_precomputed() {
        return Err(KernelError::Precomputed);
    }
    let train_dim = train.iter().map(SparseVec::max_index).max().unwrap_or(0);
    if x_new.max_index() > train_dim {
        return Err(KernelError::DimensionMismatch {
            expected: train_dim,
            got: x_new.max_index(),
        });
    }
    Ok(train.iter().map(|x| spec.eval(x, x_new)).collect())
}
