use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::{dot, norm, DenseMat, LinalgError};
use crate::rng::StreamRng;
use crate::Scalar;

/// Rank-`k` factors `R ~ U diag(sigma) V^T`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd<T> {
    /// `rows x k`, orthonormal columns.
    pub left: DenseMat<T>,
    /// Nonincreasing, nonnegative.
    pub values: Vec<T>,
    /// `cols x k`, orthonormal columns.
    pub right: DenseMat<T>,
}

impl<T: Scalar> TruncatedSvd<T> {
    pub fn reconstruct(&self) -> DenseMat<T> {
        let (m, n, k) = (self.left.rows(), self.right.rows(), self.values.len());
        let mut out = DenseMat::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut v = T::zero();
                for c in 0..k {
                    v += self.left.get(i, c) * self.values[c] * self.right.get(j, c);
                }
                out.set(i, j, v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SvdOptions {
    pub max_iterations: usize,
    /// Stop once successive right vectors differ by less than this.
    pub tolerance: f64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self { max_iterations: 500, tolerance: 1e-9 }
    }
}

pub fn truncated_svd<T: Scalar>(r: &DenseMat<T>, k: usize) -> Result<TruncatedSvd<T>, LinalgError> {
    truncated_svd_with(r, k, SvdOptions::default())
}

/// Removes the components of `v` along every vector in `basis` (two passes).
fn orthogonalize<T: Scalar>(v: &mut [T], basis: &[Vec<T>]) {
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, &y)| *x -= p * y);
        }
    }
}

/// Unit vector orthogonal to `basis`, or `None` if the basis already spans.
fn complete_basis<T: Scalar>(dim: usize, basis: &[Vec<T>]) -> Option<Vec<T>> {
    (0..dim).find_map(|e| {
        let mut v = vec![T::zero(); dim];
        v[e] = T::one();
        orthogonalize(&mut v, basis);
        let n = norm(&v);
        (n > T::of(1e-6)).then(|| v.iter().map(|&x| x / n).collect())
    })
}

/// Top-`k` SVD by power iteration on `R^T R` with deflation.
///
/// `R^T R` is never formed; each iteration applies `R` then `R^T`, and
/// deflation projects out the right vectors already found.
pub fn truncated_svd_with<T: Scalar>(
    r: &DenseMat<T>,
    k: usize,
    opts: SvdOptions,
) -> Result<TruncatedSvd<T>, LinalgError> {
    let (m, n) = (r.rows(), r.cols());
    let max = m.min(n);
    if k == 0 || k > max {
        return Err(LinalgError::RankOutOfRange { k, max });
    }
    if r.as_f64_iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let tol = T::of(opts.tolerance);
    let tiny = T::epsilon() * r.frobenius().max(T::one()) * T::of(1e3);
    let mut rng = StreamRng::seed_from_u64(0x5eed_5f0d);

    let mut rights: Vec<Vec<T>> = Vec::with_capacity(k);
    let mut lefts: Vec<Vec<T>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);

    for _ in 0..k {
        let mut v: Vec<T> = (0..n)
            .map(|_| T::of(StandardNormal.sample(&mut rng)))
            .collect();
        orthogonalize(&mut v, &rights);
        let nv = norm(&v);
        let mut v: Vec<T> = if nv > tiny {
            v.iter().map(|&x| x / nv).collect()
        } else {
            complete_basis(n, &rights).expect("k <= cols")
        };

        let mut degenerate = false;
        for _ in 0..opts.max_iterations {
            let mut w = r.tmul_vec(&r.mul_vec(&v));
            orthogonalize(&mut w, &rights);
            let nw = norm(&w);
            if nw <= tiny {
                degenerate = true;
                break;
            }
            w.iter_mut().for_each(|x| *x /= nw);
            let change = super::distance(&w, &v);
            v = w;
            if change < tol {
                break;
            }
        }
        if degenerate {
            v = complete_basis(n, &rights).expect("k <= cols");
        }

        let rv = r.mul_vec(&v);
        let sigma = norm(&rv);
        let u = if sigma > tiny {
            let mut u: Vec<T> = rv.iter().map(|&x| x / sigma).collect();
            orthogonalize(&mut u, &lefts);
            let nu = norm(&u);
            u.iter_mut().for_each(|x| *x /= nu);
            u
        } else {
            complete_basis(m, &lefts).expect("k <= rows")
        };
        values.push(if sigma > tiny { sigma } else { T::zero() });
        rights.push(v);
        lefts.push(u);
    }

    // power iteration finds them in order up to ties; enforce it exactly
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let mut left = DenseMat::zeros(m, k);
    let mut right = DenseMat::zeros(n, k);
    for (c, &src) in order.iter().enumerate() {
        for i in 0..m {
            left.set(i, c, lefts[src][i]);
        }
        for j in 0..n {
            right.set(j, c, rights[src][j]);
        }
    }
    Ok(TruncatedSvd { left, values: order.iter().map(|&i| values[i]).collect(), right })
}

impl<T: Scalar> DenseMat<T> {
    fn as_f64_iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows()).flat_map(move |i| self.row(i).iter().map(|v| v.as_f64()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal() {
        let r = DenseMat::<f64>::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let svd = truncated_svd(&r, 2).unwrap();
        assert!((svd.values[0] - 3.0).abs() < 1e-9);
        assert!((svd.values[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rank_one() {
        let a = [1.0, -2.0, 2.0];
        let b = [3.0, 0.0, 4.0, 0.0];
        let rows: Vec<Vec<f64>> = a.iter().map(|&x| b.iter().map(|&y| x * y).collect()).collect();
        let svd = truncated_svd(&DenseMat::<f64>::from_rows(&rows).unwrap(), 1).unwrap();
        assert!((svd.values[0] - 15.0).abs() < 1e-9);
    }

    #[test]
    fn identity_reconstructs_exactly() {
        let r = DenseMat::<f64>::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let svd = truncated_svd(&r, 2).unwrap();
        let rec = svd.reconstruct();
        for i in 0..2 {
            for j in 0..2 {
                assert!((rec.get(i, j) - r.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficient_gets_zero_values() {
        let r = DenseMat::<f64>::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]).unwrap();
        let svd = truncated_svd(&r, 2).unwrap();
        assert!((svd.values[0] - 10.0f64.sqrt()).abs() < 1e-9);
        assert_eq!(svd.values[1], 0.0);
        let rec = svd.reconstruct();
        assert!((rec.get(1, 0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rank_out_of_range() {
        let r = DenseMat::<f64>::zeros(2, 3);
        assert_eq!(truncated_svd(&r, 3).unwrap_err(), LinalgError::RankOutOfRange { k: 3, max: 2 });
        assert_eq!(truncated_svd(&r, 0).unwrap_err(), LinalgError::RankOutOfRange { k: 0, max: 2 });
    }
}
