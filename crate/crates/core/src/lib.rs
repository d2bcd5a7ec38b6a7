//! Online clustering of linear contextual bandits.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: small dense kernels for symmetric PSD matrices (rank-1
//!   updates, regularized solves, Jacobi eigenvalues, truncated SVD).
//!   Generic over the [`Scalar`] type.
//! - [`env`]: the ground-truth environment (users, hidden clusters, context
//!   generators, rewards, the regret oracle) and the `ENVV1` feature format.
//! - [`clusters`]: per-user statistics, the deletion-only user graph and the
//!   split/merge cluster sets shared by the policies.
//! - [`agents`]: the nine policies behind the [`Policy`] trait.
//! - [`harness`]: deterministic replicated runs, traces, aggregation and the
//!   verification checks.
//!
//! Most of the crate works in `f64`; the aliases below pin the generic
//! linear-algebra and statistics types to that precision.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod clusters;
pub mod env;
pub mod harness;
pub mod linalg;
pub mod rng;
mod scalar;

pub use agents::{build_policy, smoothed_diversity, Decision, Policy, PolicyKind, PolicySettings};
pub use clusters::ConfidenceParams;
pub use harness::{RunConfig, RunTrace};
pub use env::{ArmPool, ArmSet, EnvModel, RoundInput};
pub use scalar::Scalar;

/// `d x d` symmetric matrix in working precision.
pub type SymMatrix = linalg::SymMat<f64>;
/// Dense row-major matrix in working precision.
pub type Matrix = linalg::DenseMat<f64>;
/// Cholesky factor of a regularized design matrix in working precision.
pub type Cholesky = linalg::Cholesky<f64>;

/// Per-user sufficient statistics in working precision.
pub type UserStat = clusters::Stats<f64>;
/// Set-based cluster bookkeeping in working precision.
pub type ClusterSets = clusters::ClusterSets<f64>;
