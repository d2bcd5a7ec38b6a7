//! Dense linear algebra for small symmetric positive semi-definite matrices.
//!
//! Everything here is a pure function of its inputs. Vectors are plain
//! slices; matrices are [`SymMat`] (exactly symmetric by construction) or
//! [`DenseMat`] (general row-major, used by the SVD).

mod chol;
mod dense;
mod eigen;
mod svd;
mod sym;

pub use chol::Cholesky;
pub use dense::DenseMat;
pub use eigen::{max_eigenvalue, min_eigenvalue, sym_eigen, SymEigen};
pub use svd::{truncated_svd, truncated_svd_with, SvdOptions, TruncatedSvd};
pub use sym::SymMat;

use crate::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("regularization must be positive, got {0}")]
    BadRegularization(f64),
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("no convergence after {iterations} iterations (best estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },
    #[error("rank {k} out of range 1..={max}")]
    RankOutOfRange { k: usize, max: usize },
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<(), LinalgError> {
    if expected == found {
        Ok(())
    } else {
        Err(LinalgError::DimensionMismatch { expected, found })
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// `(lambda I + s)^{-1} b`.
pub fn reg_solve<T: Scalar>(s: &SymMat<T>, b: &[T], lambda: T) -> Result<Vec<T>, LinalgError> {
    check_dim(s.dim(), b.len())?;
    if !all_finite(b) {
        return Err(LinalgError::NonFinite);
    }
    Ok(Cholesky::regularized(s, lambda)?.solve(b))
}

/// `x^T (lambda I + s)^{-1} x`, i.e. the squared Mahalanobis norm of `x`.
pub fn quad_form_inv<T: Scalar>(s: &SymMat<T>, x: &[T], lambda: T) -> Result<T, LinalgError> {
    check_dim(s.dim(), x.len())?;
    Ok(Cholesky::regularized(s, lambda)?.inv_quad(x))
}
