use super::{check_dim, LinalgError};
use crate::Scalar;

/// Symmetric `d x d` matrix, stored densely in row-major order.
///
/// Every mutating operation writes `(i, j)` and `(j, i)` with the same value,
/// so symmetry is exact rather than approximate.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SymMat<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![T::zero(); dim * dim] }
    }

    pub fn scaled_identity(dim: usize, scale: T) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = scale;
        }
        m
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, T::one())
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    /// Builds from full rows; rejects anything that is not exactly symmetric.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            check_dim(dim, row.len())?;
            data.extend_from_slice(row);
        }
        for i in 0..dim {
            for j in 0..i {
                if data[i * dim + j] != data[j * dim + i] {
                    return Err(LinalgError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// In-place `self += x x^T`.
    pub fn rank1_update(&mut self, x: &[T]) -> Result<(), LinalgError> {
        check_dim(self.dim, x.len())?;
        let d = self.dim;
        for i in 0..d {
            for j in i..d {
                let v = self.data[i * d + j] + x[i] * x[j];
                self.data[i * d + j] = v;
                self.data[j * d + i] = v;
            }
        }
        Ok(())
    }

    /// Returns `self + x x^T`.
    pub fn rank1_add(&self, x: &[T]) -> Result<Self, LinalgError> {
        let mut out = self.clone();
        out.rank1_update(x)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), LinalgError> {
        check_dim(self.dim, other.dim)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &Self) -> Result<(), LinalgError> {
        check_dim(self.dim, other.dim)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a -= b);
        Ok(())
    }

    /// Returns `lambda I + self`.
    pub fn shifted(&self, lambda: T) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] += lambda;
        }
        out
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&v| v * factor).collect() }
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        check_dim(self.dim, x.len())?;
        Ok((0..self.dim).map(|i| super::dot(self.row(i), x)).collect())
    }

    /// `x^T self x`.
    pub fn quad_form(&self, x: &[T]) -> Result<T, LinalgError> {
        Ok(super::dot(&self.mul_vec(x)?, x))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    pub fn trace(&self) -> T {
        (0..self.dim).fold(T::zero(), |acc, i| acc + self.get(i, i))
    }
}
