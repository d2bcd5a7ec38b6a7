//! Deterministic experiment engine.
//!
//! A run is one `(policy, seed)` pair on a fixed [`Environment`]. The seed
//! keys the arrival, context, noise and exploration streams; the ground
//! truth comes from `env.seed`. All policies of one seed therefore face the
//! same users and (for stochastic contexts) the same arm sets.

mod config;
mod verify;

pub use config::{AdversaryKind, ContextKind, EnvConfig, EnvSource, Environment, ParamConfig, RunConfig};
pub use verify::{
    verify_conservation, verify_coverage, verify_eigengrowth, ConservationReport, CoverageReport, EigenReport,
};

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{build_policy, AgentError, PhaseRecord, PolicyKind};
use crate::clusters::{ConfidenceParams, PartitionSnapshot};
use crate::env::{EnvError, EnvStreams};
use crate::rng::{stream, Purpose};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{policy}, seed {seed}, round {t}: {message}")]
    Round { policy: PolicyKind, seed: u64, t: usize, message: String },
    #[error("aggregate: {0}")]
    Aggregate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub user: usize,
    pub arm: usize,
    pub reward: f64,
    pub regret: f64,
    pub cum_regret: f64,
}

/// Everything recorded about one run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub policy: PolicyKind,
    pub seed: u64,
    pub params: ConfidenceParams,
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<PartitionSnapshot>,
    pub final_partition: Vec<Vec<usize>>,
    /// Up-front exploration length of the policy.
    pub exploration_rounds: usize,
    pub uniform_rounds: usize,
    pub phase_records: Option<Vec<PhaseRecord>>,
    pub wall_clock_secs: f64,
}

impl RunTrace {
    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_regret)
    }

    /// CSV with header `t,user,arm,reward,regret,cum_regret`, LF endings.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(["t", "user", "arm", "reward", "regret", "cum_regret"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String, HarnessError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Runs `kind` for `cfg.horizon` rounds under `seed`.
pub fn run_one(cfg: &RunConfig, env: &Environment, kind: PolicyKind, seed: u64) -> Result<RunTrace, HarnessError> {
    let started = Instant::now();
    let settings = env.settings(&cfg.params, cfg.horizon);
    let mut policy = build_policy(kind, &settings)?;
    let model = &env.model;
    let mut streams = EnvStreams::new(seed, 0);
    let mut explore = stream(seed, 0, Purpose::Exploration);
    let mut history = model.new_history();
    let every = cfg.snapshot_interval();
    let mut cum = NeumaierSum::default();
    let mut rows = Vec::with_capacity(cfg.horizon);
    let mut snapshots = Vec::new();
    let fail = |t: usize, message: String| HarnessError::Round { policy: kind, seed, t, message };

    for t in 1..=cfg.horizon {
        let round = model.next_round(t, &mut streams, &history);
        let arm = policy.select(&round, &mut explore).map_err(|e| fail(t, e.to_string()))?;
        let x = round.arms.arm(arm);
        let reward = model.reward(round.user, x, &mut streams.noise);
        policy.observe(&round, arm, reward).map_err(|e| fail(t, e.to_string()))?;
        let regret = model.instant_regret(&round, arm).map_err(|e| fail(t, e.to_string()))?;
        history.record(x);
        cum.add(regret);
        rows.push(TraceRow { t, user: round.user, arm, reward, regret, cum_regret: cum.value() });
        if t % every == 0 || t == cfg.horizon {
            snapshots.push(PartitionSnapshot::new(t, policy.partition()));
        }
    }
    Ok(RunTrace {
        policy: kind,
        seed,
        params: policy.params().clone(),
        rows,
        snapshots,
        final_partition: policy.partition(),
        exploration_rounds: policy.exploration_rounds(),
        uniform_rounds: policy.uniform_rounds(),
        phase_records: policy.phase_records().map(<[_]>::to_vec),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Replica parallelism: `BANDIT_CLUSTERS_THREADS` if set, else all cores.
pub fn thread_cap() -> Option<usize> {
    std::env::var("BANDIT_CLUSTERS_THREADS").ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0)
}

/// All runs of `cfg`, grouped by policy in config order, seeds in config order.
pub fn run_grid(cfg: &RunConfig, env: &Environment, threads: Option<usize>) -> Result<Vec<Vec<RunTrace>>, HarnessError> {
    use rayon::prelude::*;
    cfg.validate()?;
    let jobs: Vec<(PolicyKind, u64)> =
        cfg.policies.iter().flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads.or_else(thread_cap) {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let traces: Vec<RunTrace> =
        pool.install(|| jobs.par_iter().map(|&(k, s)| run_one(cfg, env, k, s)).collect::<Result<_, _>>())?;
    let mut grouped: Vec<Vec<RunTrace>> = Vec::new();
    for chunk in traces.chunks(cfg.seeds.len()) {
        grouped.push(chunk.to_vec());
    }
    Ok(grouped)
}

/// Rand index between two partitions of the same users; 1.0 iff they agree
/// up to relabeling.
pub fn recovery_rate(found: &[Vec<usize>], truth: &[Vec<usize>]) -> f64 {
    let label = |p: &[Vec<usize>]| {
        let n = p.iter().flatten().max().map_or(0, |&m| m + 1);
        let mut l = vec![usize::MAX; n];
        for (j, c) in p.iter().enumerate() {
            c.iter().for_each(|&u| l[u] = j);
        }
        l
    };
    let (a, b) = (label(found), label(truth));
    let users: Vec<usize> = (0..b.len()).filter(|&u| b[u] != usize::MAX).collect();
    let same = |l: &[usize], i: usize, j: usize| l.get(i).is_some_and(|&x| x != usize::MAX && Some(&x) == l.get(j));
    let (mut agree, mut pairs) = (0u64, 0u64);
    for (k, &i) in users.iter().enumerate() {
        for &j in &users[k + 1..] {
            pairs += 1;
            agree += u64::from(same(&a, i, j) == same(&b, i, j));
        }
    }
    if pairs == 0 {
        1.0
    } else {
        agree as f64 / pairs as f64
    }
}

/// Wall-clock summary; kept out of the serialized report so that reports
/// are reproducible byte for byte.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RuntimeStats {
    pub mean_secs: f64,
    pub max_secs: f64,
    pub total_secs: f64,
}

/// Per-policy regret curve across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub policy: PolicyKind,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub mean_curve: Vec<f64>,
    /// Sample standard deviation over seeds divided by `sqrt(seeds)`.
    pub halfwidth_curve: Vec<f64>,
    pub recovery_rate: f64,
    pub exploration_scale: f64,
    pub threshold_scale: f64,
    pub final_mean: f64,
    pub final_halfwidth: f64,
    /// Up-front exploration length used by the policy.
    pub exploration_rounds: usize,
    /// Effective constants of the policy (first seed).
    pub params: ConfidenceParams,
    /// The fully resolved run configuration, when attached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    #[serde(skip)]
    pub runtime: RuntimeStats,
}

/// Mean and `sd / sqrt(n)` of cumulative regret per round, with seeds in
/// ascending order; recovery rates against `truth` averaged.
pub fn aggregate(traces: &[RunTrace], truth: &[Vec<usize>]) -> Result<AggregateReport, HarnessError> {
    let mut order: Vec<&RunTrace> = traces.iter().collect();
    order.sort_by_key(|t| t.seed);
    let first = *order.first().ok_or_else(|| HarnessError::Aggregate("no traces".into()))?;
    if order.iter().any(|t| t.policy != first.policy) {
        return Err(HarnessError::Aggregate("traces mix policies".into()));
    }
    let len = first.rows.len();
    if let Some(t) = order.iter().find(|t| t.rows.len() != len) {
        return Err(HarnessError::Aggregate(format!("seed {} has {} rounds, expected {len}", t.seed, t.rows.len())));
    }
    let n = order.len() as f64;
    let mut mean_curve = Vec::with_capacity(len);
    let mut halfwidth_curve = Vec::with_capacity(len);
    for k in 0..len {
        let mean = order.iter().map(|t| t.rows[k].cum_regret).sum::<f64>() / n;
        let hw = if order.len() < 2 {
            0.0
        } else {
            let var = order.iter().map(|t| (t.rows[k].cum_regret - mean).powi(2)).sum::<f64>() / (n - 1.0);
            var.sqrt() / n.sqrt()
        };
        mean_curve.push(mean);
        halfwidth_curve.push(hw);
    }
    let recovery = order.iter().map(|t| recovery_rate(&t.final_partition, truth)).sum::<f64>() / n;
    let secs: Vec<f64> = order.iter().map(|t| t.wall_clock_secs).collect();
    let total: f64 = secs.iter().sum();
    Ok(AggregateReport {
        policy: first.policy,
        horizon: len,
        seeds: order.iter().map(|t| t.seed).collect(),
        final_mean: mean_curve.last().copied().unwrap_or(0.0),
        final_halfwidth: halfwidth_curve.last().copied().unwrap_or(0.0),
        mean_curve,
        halfwidth_curve,
        recovery_rate: recovery,
        exploration_scale: first.params.exploration_scale,
        threshold_scale: first.params.threshold_scale,
        exploration_rounds: first.exploration_rounds,
        params: first.params.clone(),
        config: None,
        runtime: RuntimeStats { mean_secs: total / n, max_secs: secs.iter().copied().fold(0.0, f64::max), total_secs: total },
    })
}

#[cfg(test)]
mod tests;
