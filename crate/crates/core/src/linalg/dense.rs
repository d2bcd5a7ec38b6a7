use super::{check_dim, LinalgError};
use crate::Scalar;

/// General `rows x cols` matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        check_dim(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `A v` for `v` of length `cols`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.rows).map(|i| super::dot(self.row(i), v)).collect()
    }

    /// `A^T w` for `w` of length `rows`.
    pub fn tmul_vec(&self, w: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for (i, &wi) in w.iter().enumerate() {
            if wi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += wi * a;
            }
        }
        out
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == T::zero())
    }

    /// Row permutation: row `k` of the result is row `perm[k]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, self.cols);
        for (k, &src) in perm.iter().enumerate() {
            out.data[k * self.cols..(k + 1) * self.cols].copy_from_slice(self.row(src));
        }
        out
    }
}
