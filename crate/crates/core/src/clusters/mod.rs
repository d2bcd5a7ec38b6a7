//! Cluster bookkeeping shared by the policies.
//!
//! [`Stats`] holds the sufficient statistics of one user or one cluster,
//! [`UserGraph`] is the deletion-only graph of the CLUB family and
//! [`ClusterSets`] the split/merge collection of the SCLUB family.
//! [`ConfidenceParams`] carries the constants behind the confidence widths,
//! the edge-deletion threshold and the exploration budgets.

mod graph;
mod sets;

pub use graph::UserGraph;
pub use sets::{Cluster, ClusterSets};

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Cholesky, LinalgError, SymMat};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("cluster gap is unknown; the T0 budget needs it")]
    MissingGap,
    #[error("user {user} out of range 0..{users}")]
    UserOutOfRange { user: usize, users: usize },
    #[error("user {user} is not a member of cluster {cluster}")]
    NotMember { user: usize, cluster: usize },
    #[error("no live cluster with id {0}")]
    UnknownCluster(usize),
    #[error("cluster {0} is not checked")]
    Unchecked(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Constants shared by every clustering policy of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    /// Ridge regularization `lambda`.
    pub lambda: f64,
    /// Failure probability `delta` in (0, 1).
    pub delta: f64,
    /// Context norm bound `L`.
    pub norm_bound: f64,
    /// Diversity `lambda_x`: smallest eigenvalue of the context second moment.
    pub lambda_x: f64,
    /// Known cluster gap, if any.
    pub gamma: Option<f64>,
    /// Fixed UCB width; when absent it is derived from the horizon.
    pub beta: Option<f64>,
    /// Horizon `T` used inside the width.
    pub horizon: usize,
    /// Recompute the width at the next power of two instead of `horizon`.
    pub doubling: bool,
    pub users: usize,
    pub dim: usize,
    /// Multiplier on the deletion/merge threshold `f`.
    pub threshold_scale: f64,
    /// Multiplier on `T0`, `T^init` and `T^(s)`.
    pub exploration_scale: f64,
}

impl ConfidenceParams {
    /// Defaults: `lambda = 1`, `delta = 0.1`, `L = 1`, `lambda_x = 1/d`.
    pub fn new(users: usize, dim: usize, horizon: usize) -> Self {
        Self {
            lambda: 1.0,
            delta: 0.1,
            norm_bound: 1.0,
            lambda_x: 1.0 / dim.max(1) as f64,
            gamma: None,
            beta: None,
            horizon,
            doubling: false,
            users,
            dim,
            threshold_scale: 1.0,
            exploration_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: &str| Err(ClusterError::InvalidParams(m.to_string()));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.lambda) {
            return bad("lambda must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if !pos(self.norm_bound) {
            return bad("norm bound L must be positive");
        }
        if !pos(self.lambda_x) {
            return bad("lambda_x must be positive");
        }
        if self.gamma.is_some_and(|g| !pos(g)) {
            return bad("gamma must be positive");
        }
        if self.beta.is_some_and(|b| !(b.is_finite() && b >= 0.0)) {
            return bad("beta must be nonnegative");
        }
        if self.horizon == 0 || self.users == 0 || self.dim == 0 {
            return bad("horizon, users and dim must be positive");
        }
        if !pos(self.threshold_scale) || !pos(self.exploration_scale) {
            return bad("threshold_scale and exploration_scale must be positive");
        }
        Ok(())
    }

    fn log_u_delta(&self) -> f64 {
        (self.users as f64 / self.delta).ln()
    }

    /// `sqrt(d ln(1 + T L^2 / (d lambda)) + 2 ln(1/delta)) + sqrt(lambda)`.
    pub fn beta_at(&self, horizon: usize) -> f64 {
        let d = self.dim as f64;
        let l2 = self.norm_bound * self.norm_bound;
        (d * (horizon as f64 * l2 / (d * self.lambda)).ln_1p() + 2.0 * (1.0 / self.delta).ln()).sqrt()
            + self.lambda.sqrt()
    }

    /// Width used at round `t` (1-based).
    pub fn beta_for_round(&self, t: usize) -> f64 {
        match self.beta {
            Some(b) => b,
            None if self.doubling => self.beta_at(t.max(1).next_power_of_two()),
            None => self.beta_at(self.horizon),
        }
    }

    /// The edge-deletion threshold `f(count)` without `threshold_scale`.
    pub fn f_threshold(&self, count: u64) -> f64 {
        let d = self.dim as f64;
        let n = count as f64;
        let l2 = self.norm_bound * self.norm_bound;
        let num = (2.0 * self.log_u_delta() + d * (n * l2 / (self.lambda * d)).ln_1p()).sqrt() + self.lambda.sqrt();
        num / (self.lambda + n * self.lambda_x / 2.0).sqrt()
    }

    /// `threshold_scale * f(count)`, the radius actually compared against.
    pub fn radius(&self, count: u64) -> f64 {
        self.threshold_scale * self.f_threshold(count)
    }

    fn scaled(&self, raw: f64) -> usize {
        (raw * self.exploration_scale).ceil() as usize
    }

    /// Unscaled `T0 = 16u ln(u/delta) + 4u max{8L^2/lambda_x ln(ud/delta), 512d/(gamma^2 lambda_x) ln(u/delta)}`.
    pub fn t0_raw(&self) -> Result<f64, ClusterError> {
        let gamma = self.gamma.ok_or(ClusterError::MissingGap)?;
        let (u, d) = (self.users as f64, self.dim as f64);
        let lu = self.log_u_delta();
        let eig = 8.0 * self.norm_bound * self.norm_bound / self.lambda_x * (u * d / self.delta).ln();
        let sep = 512.0 * d / (gamma * gamma * self.lambda_x) * lu;
        Ok(16.0 * u * lu + 4.0 * u * eig.max(sep))
    }

    /// `ceil(exploration_scale * T0)`.
    pub fn t0_budget(&self) -> Result<usize, ClusterError> {
        Ok(self.scaled(self.t0_raw()?))
    }

    /// `ceil(exploration_scale * T^init)`.
    pub fn t_init(&self) -> usize {
        let u = self.users as f64;
        let eig = 8.0 * self.norm_bound * self.norm_bound / self.lambda_x * (u * self.dim as f64 / self.delta).ln();
        self.scaled(16.0 * u * self.log_u_delta() + 4.0 * u * eig)
    }

    /// `ceil(exploration_scale * T^(s))`, `T^(s) = 4u 512d 2^s / lambda_x ln(u/delta)`.
    pub fn t_phase(&self, s: u32) -> usize {
        let raw = 4.0 * self.users as f64 * 512.0 * self.dim as f64 * 2f64.powi(s as i32) / self.lambda_x
            * self.log_u_delta();
        self.scaled(raw)
    }
}

/// Sufficient statistics of a user or of a cluster aggregate.
///
/// `theta` is kept equal to `(lambda I + s)^{-1} b` after every mutation
/// that goes through a method taking `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stats<T> {
    s: SymMat<T>,
    b: Vec<T>,
    count: u64,
    theta: Vec<T>,
}

/// Statistics of one user.
pub type UserStats<T> = Stats<T>;

impl<T: Scalar> Stats<T> {
    pub fn new(dim: usize) -> Self {
        Self { s: SymMat::zeros(dim), b: vec![T::zero(); dim], count: 0, theta: vec![T::zero(); dim] }
    }

    /// Builds statistics from raw parts and solves for `theta`.
    pub fn from_parts(s: SymMat<T>, b: Vec<T>, count: u64, lambda: T) -> Result<Self, LinalgError> {
        linalg::check_dim(s.dim(), b.len())?;
        let mut out = Self { theta: vec![T::zero(); b.len()], s, b, count };
        out.refresh(lambda)?;
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Unregularized design matrix.
    pub fn design(&self) -> &SymMat<T> {
        &self.s
    }

    pub fn response(&self) -> &[T] {
        &self.b
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    /// `s += x x^T`, `b += r x`, `count += 1`, then re-solve.
    pub fn update(&mut self, x: &[T], r: T, lambda: T) -> Result<(), LinalgError> {
        self.accumulate(x, r)?;
        self.refresh(lambda)
    }

    /// The update without re-solving for `theta`.
    pub(crate) fn accumulate(&mut self, x: &[T], r: T) -> Result<(), LinalgError> {
        linalg::check_dim(self.dim(), x.len())?;
        self.s.rank1_update(x)?;
        for (bk, &xk) in self.b.iter_mut().zip(x) {
            *bk += r * xk;
        }
        self.count += 1;
        Ok(())
    }

    pub(crate) fn add(&mut self, other: &Self) -> Result<(), LinalgError> {
        self.s.add_assign(&other.s)?;
        self.b.iter_mut().zip(&other.b).for_each(|(a, &b)| *a += b);
        self.count += other.count;
        Ok(())
    }

    pub(crate) fn sub(&mut self, other: &Self) -> Result<(), LinalgError> {
        self.s.sub_assign(&other.s)?;
        self.b.iter_mut().zip(&other.b).for_each(|(a, &b)| *a -= b);
        self.count -= other.count;
        Ok(())
    }

    pub(crate) fn refresh(&mut self, lambda: T) -> Result<(), LinalgError> {
        self.theta = Cholesky::regularized(&self.s, lambda)?.solve(&self.b);
        Ok(())
    }
}

/// True iff `|theta_a - theta_b| > radius(T_a) + radius(T_b)`.
pub fn delete_check<T: Scalar>(a: &Stats<T>, b: &Stats<T>, p: &ConfidenceParams) -> bool {
    linalg::distance(a.theta(), b.theta()).as_f64() > p.radius(a.count()) + p.radius(b.count())
}

/// Sorts each cluster and orders clusters by their smallest member.
pub fn canonical_partition(mut clusters: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    clusters.retain(|c| !c.is_empty());
    clusters.iter_mut().for_each(|c| c.sort_unstable());
    clusters.sort_unstable_by_key(|c| c[0]);
    clusters
}

/// Partition at a given round, as written to trace output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSnapshot {
    pub round: usize,
    pub clusters: Vec<Vec<usize>>,
}

impl PartitionSnapshot {
    pub fn new(round: usize, clusters: Vec<Vec<usize>>) -> Self {
        Self { round, clusters: canonical_partition(clusters) }
    }
}
