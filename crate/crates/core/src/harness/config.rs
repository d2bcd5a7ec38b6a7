use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{smoothed_diversity, PolicyKind, PolicySettings, Smoothing};
use crate::clusters::ConfidenceParams;
use crate::env::{
    load_features, make_synthetic, Adversary, ArmPool, ContextGen, EnvModel, LoadOptions, NoiseModel, Sampler,
    SmoothedContextGen, StochasticContextGen, SyntheticSpec,
};
use crate::rng::{stream, Purpose};

/// A full experiment: environment, policies, horizon and seeds.
///
/// Every field has a default, so a config file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Horizon `T`.
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicyKind>,
    /// Rounds between partition snapshots; `T / 100` when absent.
    pub snapshot_every: Option<usize>,
    pub env: EnvConfig,
    pub params: ParamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 30_000,
            seeds: (1..=5).collect(),
            policies: vec![
                PolicyKind::UniClub,
                PolicyKind::Club,
                PolicyKind::UniSclub,
                PolicyKind::Sclub,
                PolicyKind::PhaseUniClub,
                PolicyKind::LinUcbInd,
                PolicyKind::LinUcbOne,
            ],
            snapshot_every: None,
            env: EnvConfig::default(),
            params: ParamConfig::default(),
        }
    }
}

impl RunConfig {
    /// 50 of 200 users in 10 clusters, `d = 50`, `K = 100`, 5000 arms.
    pub fn paper_scale() -> Self {
        Self {
            horizon: 100_000,
            env: EnvConfig {
                users: 200,
                selected_users: 50,
                clusters: 10,
                dim: 50,
                arms_per_round: 100,
                total_arms: 5000,
                ..EnvConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.horizon == 0 {
            return bad("T must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.policies.is_empty() {
            return bad("policies must not be empty");
        }
        if self.snapshot_every == Some(0) {
            return bad("snapshot_every must be positive");
        }
        if !(self.params.exploration_scale > 0.0) {
            return bad("params.exploration_scale must be positive");
        }
        if !(self.params.threshold_scale > 0.0) {
            return bad("params.threshold_scale must be positive");
        }
        if self.env.source == EnvSource::Features && self.env.path.is_none() {
            return bad("env.path is required when env.source = \"features\"");
        }
        Ok(())
    }

    pub fn snapshot_interval(&self) -> usize {
        self.snapshot_every.unwrap_or((self.horizon / 100).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvSource {
    /// Random users and catalogue, see [`make_synthetic`].
    Synthetic,
    /// An `ENVV1` feature file.
    Features,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextKind {
    /// Uniform subsamples of the arm catalogue.
    Pool,
    /// Uniform on the unit sphere.
    Sphere,
    /// Normalized `U(-1, 1)` coordinates.
    Cube,
    /// Adversarial means plus truncated Gaussian noise.
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    FixedGrid,
    Spiteful,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub source: EnvSource,
    /// Feature file for `source = "features"`.
    pub path: Option<PathBuf>,
    pub users: usize,
    pub selected_users: usize,
    pub clusters: usize,
    pub dim: usize,
    pub total_arms: usize,
    /// `K`.
    pub arms_per_round: usize,
    pub noise_sd: f64,
    pub clamp: bool,
    pub contexts: ContextKind,
    pub adversary: AdversaryKind,
    /// Perturbation scale of smoothed contexts.
    pub sigma: f64,
    /// Truncation `R`; `3 sigma` when absent.
    pub truncation: Option<f64>,
    /// Rounds between direction refreshes of the spiteful adversary.
    pub refresh: usize,
    /// Seed of the ground truth; run seeds only drive arrivals, contexts,
    /// noise and exploration.
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            source: EnvSource::Synthetic,
            path: None,
            users: 100,
            selected_users: 20,
            clusters: 4,
            dim: 10,
            total_arms: 1000,
            arms_per_round: 20,
            noise_sd: 0.1,
            clamp: false,
            contexts: ContextKind::Pool,
            adversary: AdversaryKind::FixedGrid,
            sigma: 0.1f64.sqrt(),
            truncation: None,
            refresh: 50,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn truncation(&self) -> f64 {
        self.truncation.unwrap_or(3.0 * self.sigma)
    }
}

/// Policy constants. Absent optional values are derived from the
/// environment (see [`Environment::resolve`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamConfig {
    pub lambda: f64,
    pub delta: f64,
    pub lambda_x: Option<f64>,
    pub norm_bound: Option<f64>,
    pub gamma: Option<f64>,
    /// Hand the true gap to policies that need one when `gamma` is absent.
    pub known_gap: bool,
    pub beta: Option<f64>,
    pub doubling: bool,
    pub threshold_scale: f64,
    pub exploration_scale: f64,
    pub alpha: u32,
    pub c1: f64,
}

impl Default for ParamConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            delta: 0.1,
            lambda_x: None,
            norm_bound: None,
            gamma: None,
            known_gap: true,
            beta: None,
            doubling: false,
            threshold_scale: 1.0,
            exploration_scale: 1.0,
            alpha: 2,
            c1: 1.0,
        }
    }
}

/// A built environment together with what policies need to know about it.
#[derive(Debug, Clone)]
pub struct Environment {
    pub model: EnvModel,
    pub pool: Arc<ArmPool>,
    pub smoothing: Option<Smoothing>,
}

impl Environment {
    pub fn build(cfg: &EnvConfig) -> Result<Self, HarnessError> {
        let noise = NoiseModel { sd: cfg.noise_sd, clamp: cfg.clamp };
        let (model, pool) = match cfg.source {
            EnvSource::Synthetic => {
                let spec = SyntheticSpec {
                    users: cfg.users,
                    dim: cfg.dim,
                    total_arms: cfg.total_arms,
                    clusters: cfg.clusters,
                    selected_users: cfg.selected_users,
                    arms_per_round: cfg.arms_per_round,
                };
                make_synthetic(&spec, noise, &mut stream(cfg.seed, 0, Purpose::Setup))?
            }
            EnvSource::Features => {
                let path = cfg.path.as_ref().ok_or_else(|| HarnessError::Config("env.path missing".into()))?;
                let opts = LoadOptions { arms_per_round: cfg.arms_per_round, noise };
                load_features(path, &opts)
                    .map_err(|e| HarnessError::Config(format!("loading {}: {e}", path.display())))?
            }
        };
        let dim = model.dim();
        let k = cfg.arms_per_round;
        let (contexts, smoothing) = match cfg.contexts {
            ContextKind::Pool => (None, None),
            ContextKind::Sphere => (Some(ContextGen::Stochastic(StochasticContextGen::new(k, Sampler::Sphere { dim })?)), None),
            ContextKind::Cube => {
                (Some(ContextGen::Stochastic(StochasticContextGen::new(k, Sampler::NormalizedCube { dim })?)), None)
            }
            ContextKind::Smoothed => {
                let adversary = match cfg.adversary {
                    AdversaryKind::FixedGrid => Adversary::FixedGrid(pool.clone()),
                    AdversaryKind::Spiteful => Adversary::Spiteful { refresh: cfg.refresh },
                };
                let r = cfg.truncation();
                let gen = SmoothedContextGen::new(k, dim, adversary, cfg.sigma, r)?;
                let s = Smoothing { sigma: cfg.sigma, truncation: r, arms: k, c1: 1.0 };
                (Some(ContextGen::Smoothed(gen)), Some(s))
            }
        };
        let model = match contexts {
            Some(c) => model.with_contexts(c)?,
            None => model,
        };
        Ok(Self { model, pool, smoothing })
    }

    /// Confidence parameters for a run of length `horizon`.
    pub fn resolve(&self, p: &ParamConfig, horizon: usize) -> ConfidenceParams {
        let ctx = self.model.contexts();
        let lambda_x = p.lambda_x.unwrap_or_else(|| match (ctx.diversity(), self.smoothing) {
            (Some(d), _) => d.value(),
            (None, Some(s)) => smoothed_diversity(p.c1, s.sigma, s.arms as f64),
            (None, None) => 1.0 / self.model.dim() as f64,
        });
        let gamma = p.gamma.or_else(|| (p.known_gap && self.model.gap().is_finite()).then(|| self.model.gap()));
        ConfidenceParams {
            lambda: p.lambda,
            delta: p.delta,
            norm_bound: p.norm_bound.unwrap_or_else(|| ctx.norm_bound()),
            lambda_x,
            gamma,
            beta: p.beta,
            horizon,
            doubling: p.doubling,
            users: self.model.users(),
            dim: self.model.dim(),
            threshold_scale: p.threshold_scale,
            exploration_scale: p.exploration_scale,
        }
    }

    pub fn settings(&self, p: &ParamConfig, horizon: usize) -> PolicySettings {
        PolicySettings {
            params: self.resolve(p, horizon),
            alpha: p.alpha,
            smoothing: self.smoothing.map(|s| Smoothing { c1: p.c1, ..s }),
        }
    }
}
