//! Empirical checks of the estimator guarantees and of the bookkeeping
//! invariants.

use rand::Rng;
use serde::Serialize;

use super::{Environment, HarnessError, ParamConfig};
use crate::agents::{build_policy, PolicyKind};
use crate::env::{ContextGen, EnvModel, EnvStreams, Sampler, StochasticContextGen};
use crate::linalg::{self, SymMat};
use crate::rng::{stream, Purpose};

/// Outcome of the minimum-eigenvalue growth check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenReport {
    pub dim: usize,
    pub lambda_x: f64,
    pub norm_bound: f64,
    pub delta: f64,
    pub n_rounds: usize,
    /// `ceil(8 L^2 / lambda_x * ln(u d / delta))`.
    pub required_rounds: usize,
    pub precondition_met: bool,
    pub trials: usize,
    pub violations: usize,
    pub violation_rate: f64,
    /// `None` when the round count is below `required_rounds`.
    pub passed: Option<bool>,
}

/// Plays `n_rounds` uniform choices among `arms` i.i.d. draws of `sampler`
/// for one user, `trials` times, and counts how often
/// `lambda_min(S) < lambda_x n / 2`. `n_rounds = None` uses the required
/// round count.
#[allow(clippy::too_many_arguments)]
pub fn verify_eigengrowth(
    sampler: &Sampler,
    lambda_x: f64,
    users: usize,
    arms: usize,
    trials: usize,
    n_rounds: Option<usize>,
    delta: f64,
    seed: u64,
) -> Result<EigenReport, HarnessError> {
    if !(lambda_x > 0.0) {
        return Err(HarnessError::Config(format!("lambda_x must be positive, got {lambda_x}")));
    }
    if !(delta > 0.0 && delta < 1.0) || trials == 0 || users == 0 {
        return Err(HarnessError::Config("need 0 < delta < 1, trials > 0 and users > 0".into()));
    }
    let dim = sampler.dim();
    let l = sampler.norm_bound();
    let required = (8.0 * l * l / lambda_x * ((users * dim) as f64 / delta).ln()).ceil() as usize;
    let n_rounds = n_rounds.unwrap_or(required);
    let gen = ContextGen::Stochastic(StochasticContextGen::new(arms, sampler.clone())?);
    let history = crate::env::ContextHistory::new(dim, 0);
    let mut rng = stream(seed, 0, Purpose::Verify);
    let mut violations = 0;
    for _ in 0..trials {
        let mut s = SymMat::<f64>::zeros(dim);
        for t in 1..=n_rounds {
            let set = gen.generate(t, &mut rng, &history);
            let k = rng.random_range(0..set.len());
            s.rank1_update(set.arm(k)).expect("sampler dimension");
        }
        let low = linalg::min_eigenvalue(&s).map_err(|e| HarnessError::Config(e.to_string()))?;
        if low < lambda_x * n_rounds as f64 / 2.0 {
            violations += 1;
        }
    }
    let rate = violations as f64 / trials as f64;
    let met = n_rounds >= required;
    Ok(EigenReport {
        dim,
        lambda_x,
        norm_bound: l,
        delta,
        n_rounds,
        required_rounds: required,
        precondition_met: met,
        trials,
        violations,
        violation_rate: rate,
        passed: met.then_some(rate <= delta),
    })
}

/// Outcome of the confidence-width coverage check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub policy: PolicyKind,
    pub delta: f64,
    pub seeds: usize,
    /// UCB rounds whose pooled users were exactly the arriving user's true cluster.
    pub checked: usize,
    pub violations: usize,
    pub violation_rate: f64,
    /// `delta + 3 sqrt(delta (1 - delta) / checked)`.
    pub bound: f64,
    pub passed: bool,
}

/// Runs `kind` on `env` and, on every UCB round whose pooled users equal
/// the arriving user's true cluster, tests
/// `|x^T (theta_hat - theta)| <= beta |x|` in the pooled inverse metric for
/// the chosen arm.
pub fn verify_coverage(
    env: &Environment,
    params: &ParamConfig,
    kind: PolicyKind,
    horizon: usize,
    seeds: &[u64],
) -> Result<CoverageReport, HarnessError> {
    let model = &env.model;
    let truth = model.partition();
    let settings = env.settings(params, horizon);
    let delta = settings.params.delta;
    let (mut checked, mut violations) = (0usize, 0usize);
    for &seed in seeds {
        let mut policy = build_policy(kind, &settings)?;
        let mut streams = EnvStreams::new(seed, 0);
        let mut explore = stream(seed, 0, Purpose::Exploration);
        let mut history = model.new_history();
        for t in 1..=horizon {
            let round = model.next_round(t, &mut streams, &history);
            let arm = policy.select(&round, &mut explore)?;
            let x = round.arms.arm(arm);
            if let Some(d) = policy.last_decision().filter(|d| !d.exploratory) {
                if d.cluster == truth[model.cluster_of(round.user)] {
                    let est = d.estimate.as_deref().expect("UCB decisions carry an estimate");
                    let err = (linalg::dot(x, est) - model.expected_reward(round.user, x)).abs();
                    checked += 1;
                    violations += usize::from(err > d.width.expect("UCB decisions carry a width"));
                }
            }
            let reward = model.reward(round.user, x, &mut streams.noise);
            policy.observe(&round, arm, reward)?;
            history.record(x);
        }
    }
    let rate = if checked == 0 { 0.0 } else { violations as f64 / checked as f64 };
    let bound = if checked == 0 { delta } else { delta + 3.0 * (delta * (1.0 - delta) / checked as f64).sqrt() };
    Ok(CoverageReport {
        policy: kind,
        delta,
        seeds: seeds.len(),
        checked,
        violations,
        violation_rate: rate,
        bound,
        passed: checked > 0 && rate <= bound,
    })
}

/// Outcome of the bookkeeping fuzz run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    pub rounds: usize,
    pub policies: Vec<PolicyKind>,
    pub checks: usize,
    pub violations: Vec<String>,
}

impl ConservationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn is_partition(p: &[Vec<usize>], users: usize) -> bool {
    let mut seen = vec![false; users];
    for &u in p.iter().flatten() {
        if u >= users || std::mem::replace(&mut seen[u], true) {
            return false;
        }
    }
    seen.into_iter().all(|s| s)
}

fn refines(fine: &[Vec<usize>], coarse: &[Vec<usize>]) -> bool {
    fine.iter().all(|f| coarse.iter().any(|c| f.iter().all(|x| c.contains(x))))
}

/// After every round of every policy: set aggregates match the sum of their
/// members' statistics, partitions cover the users exactly once, graph
/// partitions only refine, and only the arriving user's statistics change.
pub fn verify_conservation(
    env: &Environment,
    params: &ParamConfig,
    policies: &[PolicyKind],
    rounds: usize,
    seed: u64,
) -> Result<ConservationReport, HarnessError> {
    let model: &EnvModel = &env.model;
    let settings = env.settings(params, rounds);
    let mut violations = Vec::new();
    let mut checks = 0;
    for &kind in policies {
        let mut policy = build_policy(kind, &settings)?;
        let graph = matches!(kind, PolicyKind::Club | PolicyKind::UniClub | PolicyKind::SaClub | PolicyKind::PhaseUniClub);
        let mut streams = EnvStreams::new(seed, 0);
        let mut explore = stream(seed, 0, Purpose::Exploration);
        let mut history = model.new_history();
        let mut before = policy.user_stats().to_vec();
        let mut parts = policy.partition();
        for t in 1..=rounds {
            let round = model.next_round(t, &mut streams, &history);
            let arm = policy.select(&round, &mut explore)?;
            let x = round.arms.arm(arm);
            let reward = model.reward(round.user, x, &mut streams.noise);
            policy.observe(&round, arm, reward)?;
            history.record(x);
            checks += 1;
            let mut flag = |m: String| violations.push(format!("{kind} round {t}: {m}"));
            if let Err(e) = policy.audit() {
                flag(e);
            }
            let now = policy.user_stats();
            if (0..now.len()).any(|i| i != round.user && now[i] != before[i]) {
                flag("a non-arriving user's statistics changed".into());
            }
            before = now.to_vec();
            let cur = policy.partition();
            if !is_partition(&cur, model.users()) {
                flag("clusters do not partition the users".into());
            }
            if graph && !refines(&cur, &parts) {
                flag("graph components merged".into());
            }
            parts = cur;
        }
    }
    Ok(ConservationReport { rounds, policies: policies.to_vec(), checks, violations })
}
