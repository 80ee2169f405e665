//! Small dense square matrices, row-major.
//!
//! Everything in this crate that is indexed by tasks (`T x T`) or samples
//! (`n x n`) is dense; `T` is at most a few hundred and `n` a few thousand.

/// Dense square matrix of `f64`, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMat {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMat {
    pub fn zeros(dim: usize) -> Self {
        SquareMat {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim, "data length must be dim^2");
        SquareMat { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] += v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SquareMat {
        SquareMat {
            dim: self.dim,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn symmetry_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &SquareMat) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Entrywise inner product `sum_ij a_ij b_ij`.
    pub fn dot(&self, other: &SquareMat) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// In-place `(A + A^T) / 2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }

    /// Attempts an in-place Cholesky factorization of `self` (lower triangle).
    /// Returns the index of the first non-positive pivot on failure.
    pub fn cholesky_check(&self) -> Result<(), usize> {
        let n = self.dim;
        let mut a = self.data.clone();
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(j);
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_accepts_identity_rejects_indefinite() {
        assert!(SquareMat::identity(4).cholesky_check().is_ok());
        // [[1,2],[2,1]] has eigenvalues {3,-1}
        let m = SquareMat::from_vec(2, vec![1.0, 2.0, 2.0, 1.0]);
        assert!(m.cholesky_check().is_err());
    }

    #[test]
    fn symmetry_violation_detects_asymmetry() {
        let m = SquareMat::from_vec(2, vec![1.0, 0.5, 0.4, 1.0]);
        assert!((m.symmetry_violation() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn symmetrize_is_idempotent() {
        let mut m = SquareMat::from_vec(2, vec![1.0, 0.5, 0.4, 1.0]);
        m.symmetrize();
        let once = m.clone();
        m.symmetrize();
        assert_eq!(m, once);
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }
}
