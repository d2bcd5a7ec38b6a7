use super::{LinalgError, SymMat};
use crate::Scalar;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues (ascending) and the matching unit eigenvectors (`vectors[k]`).
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
}

fn off_diagonal<T: Scalar>(a: &[T], d: usize) -> T {
    let mut s = T::zero();
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += a[i * d + j] * a[i * d + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Stops when the off-diagonal Frobenius norm drops below
/// `1e-10 * max(1, |A|_F)` (or a few ulps for `f32`).
pub fn sym_eigen<T: Scalar>(s: &SymMat<T>) -> Result<SymEigen<T>, LinalgError> {
    if !s.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let d = s.dim();
    let mut a = s.as_slice().to_vec();
    let mut v = vec![T::zero(); d * d];
    for i in 0..d {
        v[i * d + i] = T::one();
    }
    let scale = s.frobenius().max(T::one());
    let tol = T::of(1e-10).max(T::epsilon() * T::of(16.0)) * scale;
    let two = T::of(2.0);

    let mut sweeps = 0;
    while off_diagonal(&a, d) > tol {
        if sweeps == MAX_SWEEPS {
            let best = (0..d).map(|i| a[i * d + i]).fold(T::infinity(), T::min);
            return Err(LinalgError::NoConvergence { iterations: sweeps, estimate: best.as_f64() });
        }
        sweeps += 1;
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let sn = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - sn * akq;
                    a[k * d + q] = sn * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - sn * aqk;
                    a[q * d + k] = sn * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - sn * vkq;
                    v[k * d + q] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[i * d + i].partial_cmp(&a[j * d + j]).unwrap());
    Ok(SymEigen {
        values: order.iter().map(|&i| a[i * d + i]).collect(),
        vectors: order.iter().map(|&i| (0..d).map(|k| v[k * d + i]).collect()).collect(),
    })
}

pub fn min_eigenvalue<T: Scalar>(s: &SymMat<T>) -> Result<T, LinalgError> {
    Ok(sym_eigen(s)?.values.first().copied().unwrap_or_else(T::zero))
}

pub fn max_eigenvalue<T: Scalar>(s: &SymMat<T>) -> Result<T, LinalgError> {
    Ok(sym_eigen(s)?.values.last().copied().unwrap_or_else(T::zero))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert!((min_eigenvalue(&SymMat::<f64>::from_diag(&[2.0, 5.0, 7.0])).unwrap() - 2.0).abs() < 1e-12);
        let m = SymMat::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!((min_eigenvalue(&m).unwrap() - 1.0).abs() < 1e-12);
        assert!((max_eigenvalue(&m).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(min_eigenvalue(&SymMat::<f64>::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn eigenvectors_diagonalize() {
        let m = SymMat::<f64>::from_rows(&[
            vec![4.0, 1.0, -2.0],
            vec![1.0, 2.0, 0.0],
            vec![-2.0, 0.0, 3.0],
        ])
        .unwrap();
        let e = sym_eigen(&m).unwrap();
        for (val, vec) in e.values.iter().zip(&e.vectors) {
            let mv = m.mul_vec(vec).unwrap();
            for k in 0..3 {
                assert!((mv[k] - val * vec[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_nan() {
        let m = SymMat::<f64>::from_diag(&[1.0, f64::NAN]);
        assert_eq!(min_eigenvalue(&m), Err(LinalgError::NonFinite));
    }

    proptest! {
        #[test]
        fn shift_property(
            rows in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 4), 1..12),
            lambda in 0.01f64..5.0,
        ) {
            let mut s = SymMat::<f64>::zeros(4);
            for r in &rows {
                s.rank1_update(r).unwrap();
            }
            let base = min_eigenvalue(&s).unwrap();
            let shifted = min_eigenvalue(&s.shifted(lambda)).unwrap();
            prop_assert!((shifted - (base + lambda)).abs() <= 1e-6 * (1.0 + shifted.abs()));
        }

        #[test]
        fn rayleigh_sandwich(
            rows in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 4), 0..12),
            x in proptest::collection::vec(-2.0f64..2.0, 4),
            lambda in 0.05f64..3.0,
        ) {
            let mut s = SymMat::<f64>::zeros(4);
            for r in &rows {
                s.rank1_update(r).unwrap();
            }
            let q = crate::linalg::quad_form_inv(&s, &x, lambda).unwrap();
            let reg = s.shifted(lambda);
            let lo = min_eigenvalue(&reg).unwrap();
            let hi = max_eigenvalue(&reg).unwrap();
            let n2 = crate::linalg::dot(&x, &x);
            let slack = 1e-9 * (1.0 + n2);
            prop_assert!(q * lo <= n2 + slack);
            prop_assert!(n2 <= q * hi + slack);
        }
    }
}
