use super::{check_dim, LinalgError, SymMat};
use crate::Scalar;

/// Lower-triangular Cholesky factor `L` of `lambda I + S`.
///
/// Built once per round per cluster and reused for the estimate and for
/// every arm's confidence width.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    dim: usize,
    lower: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn regularized(s: &SymMat<T>, lambda: T) -> Result<Self, LinalgError> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(LinalgError::BadRegularization(lambda.as_f64()));
        }
        Self::factor(&s.shifted(lambda))
    }

    pub fn factor(a: &SymMat<T>) -> Result<Self, LinalgError> {
        if !a.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let d = a.dim();
        let mut l = vec![T::zero(); d * d];
        for j in 0..d {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if !(diag > T::zero()) {
                return Err(LinalgError::NotPositiveDefinite { pivot: j, value: diag.as_f64() });
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut v = a.get(i, j);
                for k in 0..j {
                    v -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = v / ljj;
            }
        }
        Ok(Self { dim: d, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[T]) -> Vec<T> {
        let d = self.dim;
        let mut y = b.to_vec();
        for i in 0..d {
            let mut v = y[i];
            for k in 0..i {
                v -= self.lower[i * d + k] * y[k];
            }
            y[i] = v / self.lower[i * d + i];
        }
        y
    }

    /// Solves `(L L^T) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let d = self.dim;
        let mut x = self.forward(b);
        for i in (0..d).rev() {
            let mut v = x[i];
            for k in (i + 1)..d {
                v -= self.lower[k * d + i] * x[k];
            }
            x[i] = v / self.lower[i * d + i];
        }
        x
    }

    pub fn try_solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        check_dim(self.dim, b.len())?;
        Ok(self.solve(b))
    }

    /// `x^T (L L^T)^{-1} x = |L^{-1} x|^2`.
    pub fn inv_quad(&self, x: &[T]) -> T {
        let y = self.forward(x);
        super::dot(&y, &y)
    }

    /// `log det (L L^T)`.
    pub fn log_det(&self) -> T {
        let two = T::one() + T::one();
        (0..self.dim).fold(T::zero(), |acc, i| acc + two * self.lower[i * self.dim + i].ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = SymMat::<f64>::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let c = Cholesky::factor(&a).unwrap();
        let x = c.solve(&[2.0, 1.0]);
        let back = a.mul_vec(&x).unwrap();
        assert!((back[0] - 2.0).abs() < 1e-14 && (back[1] - 1.0).abs() < 1e-14);
        assert!((c.log_det() - 8.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let a = SymMat::<f64>::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(Cholesky::factor(&a), Err(LinalgError::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn residual_contract_on_ill_conditioned() {
        let mut s = SymMat::<f64>::zeros(6);
        for k in 0..200 {
            let x: Vec<f64> = (0..6).map(|i| ((k * 7 + i * 13) % 17) as f64 / 17.0 - 0.5).collect();
            s.rank1_update(&x).unwrap();
        }
        let b = vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0];
        let lambda = 1e-3;
        let th = super::super::reg_solve(&s, &b, lambda).unwrap();
        let r = s.shifted(lambda).mul_vec(&th).unwrap();
        let res = super::super::distance(&r, &b);
        assert!(res <= 1e-8 * super::super::norm(&b).max(1.0), "residual {res}");
    }
}
