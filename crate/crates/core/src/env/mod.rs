//! Ground-truth environment.
//!
//! An [`EnvModel`] fixes a hidden partition of users into clusters, one
//! preference vector per cluster, a context generator and a reward noise
//! model. It is immutable once built; all randomness comes in through
//! explicit [`EnvStreams`].

mod context;
mod features;
mod feedback;
mod synthetic;

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use context::{
    sample_truncated_gaussian, Adversary, ContextGen, ContextHistory, Diversity, Sampler,
    SmoothedContextGen, StochasticContextGen,
};
pub use features::{load_features, parse_features, write_features, FeatureFile, LoadOptions};
pub use feedback::{parse_triplets, svd_features, Feedback};
pub use synthetic::{make_synthetic, SyntheticSpec};

use crate::linalg::{self, LinalgError};
use crate::rng::{self, Purpose, StreamRng};
use crate::SymMatrix;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("arm index {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(msg: impl Into<String>) -> EnvError {
    EnvError::Invalid(msg.into())
}

/// A list of `d`-dimensional arm feature vectors stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSet {
    dim: usize,
    data: Vec<f64>,
}

/// The full catalogue arm sets are drawn from.
pub type ArmPool = ArmSet;

impl ArmSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, EnvError> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(invalid(format!("{} values do not split into rows of {dim}", data.len())));
        }
        if !linalg::all_finite(&data) {
            return Err(invalid("non-finite arm feature"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_vectors(dim: usize, vectors: &[Vec<f64>]) -> Result<Self, EnvError> {
        let mut data = Vec::with_capacity(vectors.len() * dim);
        for v in vectors {
            if v.len() != dim {
                return Err(LinalgError::DimensionMismatch { expected: dim, found: v.len() }.into());
            }
            data.extend_from_slice(v);
        }
        Self::new(dim, data)
    }

    pub(crate) fn with_capacity(dim: usize, arms: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * arms) }
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.data.extend_from_slice(x);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn arm(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn max_norm(&self) -> f64 {
        self.iter().map(linalg::norm).fold(0.0, f64::max)
    }

    /// Mean of `x x^T` over the set.
    pub fn second_moment(&self) -> SymMatrix {
        let mut m = SymMatrix::zeros(self.dim);
        for x in self.iter() {
            m.rank1_update(x).expect("dims match");
        }
        m.scaled(1.0 / self.len().max(1) as f64)
    }
}

/// Sub-Gaussian reward noise: `N(0, sd^2)`, optionally clamping the reward
/// into `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseModel {
    pub sd: f64,
    pub clamp: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { sd: 0.1, clamp: false }
    }
}

/// One round's arrival: the user and the arms on offer.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundInput {
    /// 1-based round index.
    pub t: usize,
    pub user: usize,
    pub arms: ArmSet,
}

/// The random streams an environment consumes.
#[derive(Debug, Clone)]
pub struct EnvStreams {
    pub arrival: StreamRng,
    pub context: StreamRng,
    pub noise: StreamRng,
}

impl EnvStreams {
    pub fn new(seed: u64, replica: u64) -> Self {
        Self {
            arrival: rng::stream(seed, replica, Purpose::Arrival),
            context: rng::stream(seed, replica, Purpose::Context),
            noise: rng::stream(seed, replica, Purpose::Noise),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnvModel {
    dim: usize,
    assignment: Vec<usize>,
    user_vectors: Vec<Vec<f64>>,
    prefs: Vec<Vec<f64>>,
    gap: f64,
    noise: NoiseModel,
    contexts: ContextGen,
}

impl EnvModel {
    /// Builds an environment whose cluster preference vectors are the means
    /// of their members' vectors.
    pub fn from_members(
        assignment: Vec<usize>,
        user_vectors: Vec<Vec<f64>>,
        noise: NoiseModel,
        contexts: ContextGen,
    ) -> Result<Self, EnvError> {
        let m = assignment.iter().max().map_or(0, |&j| j + 1);
        let dim = contexts.dim();
        if assignment.len() != user_vectors.len() {
            return Err(invalid("one vector per user required"));
        }
        let mut sums = vec![vec![0.0; dim]; m];
        let mut counts = vec![0usize; m];
        for (&j, v) in assignment.iter().zip(&user_vectors) {
            if v.len() != dim {
                return Err(LinalgError::DimensionMismatch { expected: dim, found: v.len() }.into());
            }
            sums[j].iter_mut().zip(v).for_each(|(s, x)| *s += x);
            counts[j] += 1;
        }
        let prefs = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| s.into_iter().map(|v| v / c.max(1) as f64).collect())
            .collect();
        Self::build(assignment, user_vectors, prefs, noise, contexts)
    }

    /// Builds an environment with explicit cluster preference vectors.
    pub fn new(
        assignment: Vec<usize>,
        prefs: Vec<Vec<f64>>,
        noise: NoiseModel,
        contexts: ContextGen,
    ) -> Result<Self, EnvError> {
        let user_vectors = assignment.iter().map(|&j| prefs.get(j).cloned().unwrap_or_default()).collect();
        Self::build(assignment, user_vectors, prefs, noise, contexts)
    }

    fn build(
        assignment: Vec<usize>,
        user_vectors: Vec<Vec<f64>>,
        prefs: Vec<Vec<f64>>,
        noise: NoiseModel,
        contexts: ContextGen,
    ) -> Result<Self, EnvError> {
        let dim = contexts.dim();
        let m = prefs.len();
        if assignment.is_empty() || m == 0 {
            return Err(invalid("need at least one user and one cluster"));
        }
        let mut used = vec![false; m];
        for &j in &assignment {
            *used.get_mut(j).ok_or_else(|| invalid(format!("cluster {j} out of range")))? = true;
        }
        if let Some(j) = used.iter().position(|u| !u) {
            return Err(invalid(format!("cluster {j} has no members")));
        }
        for (j, p) in prefs.iter().enumerate() {
            if p.len() != dim {
                return Err(LinalgError::DimensionMismatch { expected: dim, found: p.len() }.into());
            }
            if !linalg::all_finite(p) {
                return Err(invalid(format!("cluster {j}: non-finite preference")));
            }
            let n = linalg::norm(p);
            if n > 1.0 + 1e-9 {
                return Err(invalid(format!("cluster {j}: preference norm {n} exceeds 1")));
            }
        }
        let mut gap = f64::INFINITY;
        for a in 0..m {
            for b in (a + 1)..m {
                gap = gap.min(linalg::distance(&prefs[a], &prefs[b]));
            }
        }
        if !(gap > 0.0) {
            return Err(invalid("two clusters share a preference vector (gap is zero)"));
        }
        if !(noise.sd >= 0.0 && noise.sd.is_finite()) {
            return Err(invalid("noise sd must be finite and nonnegative"));
        }
        Ok(Self { dim, assignment, user_vectors, prefs, gap, noise, contexts })
    }

    /// Same ground truth, different context generator.
    pub fn with_contexts(&self, contexts: ContextGen) -> Result<Self, EnvError> {
        if contexts.dim() != self.dim {
            return Err(LinalgError::DimensionMismatch { expected: self.dim, found: contexts.dim() }.into());
        }
        Ok(Self { contexts, ..self.clone() })
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Self {
        Self { noise, ..self.clone() }
    }

    pub fn users(&self) -> usize {
        self.assignment.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clusters(&self) -> usize {
        self.prefs.len()
    }

    /// Minimum pairwise distance between cluster preference vectors
    /// (infinite with a single cluster).
    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn cluster_of(&self, user: usize) -> usize {
        self.assignment[user]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn preference(&self, cluster: usize) -> &[f64] {
        &self.prefs[cluster]
    }

    pub fn user_preference(&self, user: usize) -> &[f64] {
        &self.prefs[self.assignment[user]]
    }

    pub fn user_vectors(&self) -> &[Vec<f64>] {
        &self.user_vectors
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn contexts(&self) -> &ContextGen {
        &self.contexts
    }

    pub fn arms_per_round(&self) -> usize {
        self.contexts.arms()
    }

    /// Ground-truth partition as sorted member lists, ordered by cluster id.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.prefs.len()];
        for (i, &j) in self.assignment.iter().enumerate() {
            out[j].push(i);
        }
        out
    }

    pub fn new_history(&self) -> ContextHistory {
        ContextHistory::new(self.dim, self.contexts.refresh_interval())
    }

    /// Draws the round-`t` user (uniformly) and its arm set.
    pub fn next_round(&self, t: usize, streams: &mut EnvStreams, history: &ContextHistory) -> RoundInput {
        let user = streams.arrival.random_range(0..self.users());
        let arms = self.contexts.generate(t, &mut streams.context, history);
        RoundInput { t, user, arms }
    }

    pub fn expected_reward(&self, user: usize, x: &[f64]) -> f64 {
        linalg::dot(x, self.user_preference(user))
    }

    pub fn reward(&self, user: usize, x: &[f64], rng: &mut StreamRng) -> f64 {
        let eta: f64 = StandardNormal.sample(rng);
        let r = self.expected_reward(user, x) + self.noise.sd * eta;
        if self.noise.clamp {
            r.clamp(-1.0, 1.0)
        } else {
            r
        }
    }

    /// Expected shortfall of `chosen` against the best arm on offer.
    pub fn instant_regret(&self, round: &RoundInput, chosen: usize) -> Result<f64, EnvError> {
        let arms = round.arms.len();
        if chosen >= arms {
            return Err(EnvError::ArmOutOfRange { arm: chosen, arms });
        }
        let theta = self.user_preference(round.user);
        let best = round.arms.iter().map(|x| linalg::dot(x, theta)).fold(f64::NEG_INFINITY, f64::max);
        Ok((best - linalg::dot(round.arms.arm(chosen), theta)).max(0.0))
    }
}

/// Shared handle used when one pool feeds several generators.
pub type SharedPool = Arc<ArmPool>;

#[cfg(test)]
mod tests {
    use super::*;

    fn point_env(users: usize, x0: Vec<f64>, k: usize) -> EnvModel {
        let contexts = ContextGen::Stochastic(StochasticContextGen::new(k, Sampler::PointMass(x0)).unwrap());
        EnvModel::new(vec![0; users], vec![vec![0.6, 0.0]], NoiseModel { sd: 0.0, clamp: false }, contexts).unwrap()
    }

    #[test]
    fn singleton_population() {
        let env = point_env(1, vec![1.0, 0.0], 3);
        let mut s = EnvStreams::new(1, 0);
        let h = env.new_history();
        for t in 1..50 {
            let r = env.next_round(t, &mut s, &h);
            assert_eq!(r.user, 0);
            assert_eq!(r.arms.len(), 3);
            assert!(r.arms.iter().all(|x| x == [1.0, 0.0]));
        }
    }

    #[test]
    fn user_arrival_is_uniform() {
        let env = point_env(20, vec![1.0, 0.0], 1);
        let mut s = EnvStreams::new(3, 0);
        let h = env.new_history();
        let n = 100_000;
        let mut counts = [0usize; 20];
        for t in 1..=n {
            counts[env.next_round(t, &mut s, &h).user] += 1;
        }
        let p = 1.0 / 20.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sd, "count {c}");
        }
    }

    #[test]
    fn reward_without_noise_is_exact() {
        let env = point_env(2, vec![1.0, 0.0], 1);
        let mut rng = rng::stream(0, 0, Purpose::Noise);
        assert_eq!(env.reward(0, &[0.5, 0.3], &mut rng), 0.3);
        assert_eq!(env.reward(0, &[0.0, 1.0], &mut rng), 0.0);
    }

    #[test]
    fn reward_sample_mean() {
        let env = point_env(1, vec![1.0, 0.0], 1).with_noise(NoiseModel { sd: 0.1, clamp: false });
        let mut rng = rng::stream(9, 0, Purpose::Noise);
        let n = 100_000;
        let mean = (0..n).map(|_| env.reward(0, &[0.5, 0.5], &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.3).abs() <= 3.0 * 0.1 / (n as f64).sqrt());
    }

    #[test]
    fn clamp_flag_bounds_reward() {
        let env = point_env(1, vec![1.0, 0.0], 1).with_noise(NoiseModel { sd: 5.0, clamp: true });
        let mut rng = rng::stream(2, 0, Purpose::Noise);
        assert!((0..1000).all(|_| env.reward(0, &[1.0, 0.0], &mut rng).abs() <= 1.0));
    }

    #[test]
    fn regret_examples() {
        let env = EnvModel::new(
            vec![0],
            vec![vec![1.0, 0.0]],
            NoiseModel::default(),
            ContextGen::Stochastic(StochasticContextGen::new(2, Sampler::Sphere { dim: 2 }).unwrap()),
        )
        .unwrap();
        let arms = ArmSet::from_vectors(2, &[vec![0.7, 0.1], vec![0.2, 0.9]]).unwrap();
        let round = RoundInput { t: 1, user: 0, arms };
        assert_eq!(env.instant_regret(&round, 0).unwrap(), 0.0);
        assert!((env.instant_regret(&round, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(env.instant_regret(&round, 2), Err(EnvError::ArmOutOfRange { .. })));
    }

    #[test]
    fn regret_matches_exhaustive_scan() {
        let ctx = ContextGen::Stochastic(StochasticContextGen::new(7, Sampler::Sphere { dim: 4 }).unwrap());
        let env = EnvModel::new(vec![0, 1], vec![vec![0.5, -0.2, 0.1, 0.3], vec![-0.1, 0.4, 0.4, 0.0]], NoiseModel::default(), ctx)
            .unwrap();
        let mut s = EnvStreams::new(11, 0);
        let h = env.new_history();
        for t in 1..200 {
            let r = env.next_round(t, &mut s, &h);
            let theta = env.user_preference(r.user);
            let vals: Vec<f64> = r.arms.iter().map(|x| linalg::dot(x, theta)).collect();
            for (k, v) in vals.iter().enumerate() {
                let mut best = vals[0];
                for w in &vals {
                    if *w > best {
                        best = *w;
                    }
                }
                let reg = env.instant_regret(&r, k).unwrap();
                assert_eq!(reg, best - v);
                assert!(reg >= 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_models() {
        let ctx = || ContextGen::Stochastic(StochasticContextGen::new(2, Sampler::Sphere { dim: 2 }).unwrap());
        assert!(EnvModel::new(vec![0, 0], vec![vec![2.0, 0.0]], NoiseModel::default(), ctx()).is_err());
        assert!(EnvModel::new(vec![0, 0], vec![vec![0.1, 0.0], vec![0.2, 0.0]], NoiseModel::default(), ctx()).is_err());
        assert!(EnvModel::new(vec![0, 1], vec![vec![0.1, 0.0], vec![0.1, 0.0]], NoiseModel::default(), ctx()).is_err());
    }

    #[test]
    fn determinism_of_rounds_and_rewards() {
        let spec = SyntheticSpec { users: 30, dim: 5, total_arms: 200, clusters: 3, selected_users: 12, arms_per_round: 10 };
        let run = || {
            let (env, _) = make_synthetic(&spec, NoiseModel::default(), &mut rng::stream(4, 0, Purpose::Setup)).unwrap();
            let mut s = EnvStreams::new(4, 0);
            let h = env.new_history();
            (1..100)
                .map(|t| {
                    let r = env.next_round(t, &mut s, &h);
                    let rew = env.reward(r.user, r.arms.arm(0), &mut s.noise);
                    (r, rew.to_bits())
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
