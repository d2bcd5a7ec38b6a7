//! The nine policies behind the [`Policy`] trait.
//!
//! Every policy keeps per-user statistics. They differ in which users'
//! statistics are pooled to answer a round:
//!
//! | kind | pooling | exploration |
//! |---|---|---|
//! | `linucb-one` | all users | none |
//! | `linucb-ind` | the arriving user | none |
//! | `club`, `saclub` | connected component, edge deletion | none |
//! | `uniclub` | connected component, edge deletion | first `T0` rounds |
//! | `phase-uniclub` | neighbours plus self, edge deletion | `T^init`, then `T^(s)` per phase |
//! | `sclub`, `sasclub` | split/merge sets | none |
//! | `unisclub` | split/merge sets | first `2 T0` rounds |
//!
//! The `sa` variants run with the diversity and norm bound of a smoothed
//! context generator (see [`smoothed_params`]).

mod clock;
mod graph;
mod linucb;
mod sets;

pub use clock::{PhaseClock, PhaseRecord, PhaseStep, SclubPhaseClock};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clusters::{ClusterError, ConfidenceParams};
use crate::env::{ArmSet, RoundInput};
use crate::linalg::{self, Cholesky, LinalgError, SymMat};
use crate::rng::StreamRng;
use crate::UserStat;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("user {user} out of range 0..{users}")]
    UserOutOfRange { user: usize, users: usize },
    #[error("round {0} offers no arms")]
    EmptyArmSet(usize),
    #[error("arm {arm} out of range 0..{arms}")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("observe out of order: {0}")]
    OutOfOrder(String),
    #[error("invalid policy settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "linucb-one")]
    LinUcbOne,
    #[serde(rename = "linucb-ind")]
    LinUcbInd,
    #[serde(rename = "club")]
    Club,
    #[serde(rename = "sclub")]
    Sclub,
    #[serde(rename = "uniclub")]
    UniClub,
    #[serde(rename = "unisclub")]
    UniSclub,
    #[serde(rename = "phase-uniclub")]
    PhaseUniClub,
    #[serde(rename = "saclub")]
    SaClub,
    #[serde(rename = "sasclub")]
    SaSclub,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 9] = [
        Self::LinUcbOne,
        Self::LinUcbInd,
        Self::Club,
        Self::Sclub,
        Self::UniClub,
        Self::UniSclub,
        Self::PhaseUniClub,
        Self::SaClub,
        Self::SaSclub,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::LinUcbOne => "linucb-one",
            Self::LinUcbInd => "linucb-ind",
            Self::Club => "club",
            Self::Sclub => "sclub",
            Self::UniClub => "uniclub",
            Self::UniSclub => "unisclub",
            Self::PhaseUniClub => "phase-uniclub",
            Self::SaClub => "saclub",
            Self::SaSclub => "sasclub",
        }
    }

    /// Whether the policy needs the smoothed-context constants.
    pub fn is_smoothed(self) -> bool {
        matches!(self, Self::SaClub | Self::SaSclub)
    }

    /// Whether the policy needs a known cluster gap.
    pub fn needs_gap(self) -> bool {
        matches!(self, Self::UniClub | Self::UniSclub)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| format!("unknown policy `{s}` (expected one of {})", Self::ALL.map(|k| k.name()).join(", ")))
    }
}

/// What a policy decided in its latest round.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub t: usize,
    pub user: usize,
    pub arm: usize,
    /// Chosen uniformly at random.
    pub exploratory: bool,
    /// Users whose statistics were pooled; empty for exploratory rounds.
    pub cluster: Vec<usize>,
    /// Pooled estimate; `None` for exploratory rounds.
    pub estimate: Option<Vec<f64>>,
    /// `beta * |x_arm|` in the pooled inverse metric; `None` for exploratory rounds.
    pub width: Option<f64>,
    pub beta: f64,
}

/// A policy instance bound to one run.
pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    fn params(&self) -> &ConfidenceParams;

    /// Picks an arm for `round`. Exploration draws come from `rng`.
    fn select(&mut self, round: &RoundInput, rng: &mut StreamRng) -> Result<usize, AgentError>;

    /// Feeds back the reward of the arm returned by the preceding `select`.
    fn observe(&mut self, round: &RoundInput, chosen: usize, reward: f64) -> Result<(), AgentError>;

    /// Current inferred clusters, canonical order.
    fn partition(&self) -> Vec<Vec<usize>>;

    fn user_stats(&self) -> &[UserStat];

    fn last_decision(&self) -> Option<&Decision>;

    /// Number of uniform-selection rounds so far.
    fn uniform_rounds(&self) -> usize;

    /// Length of the up-front pure-exploration period (0 if none).
    fn exploration_rounds(&self) -> usize;

    /// Per-phase bookkeeping, for phase-based policies.
    fn phase_records(&self) -> Option<&[PhaseRecord]> {
        None
    }

    /// Consistency of the internal cluster bookkeeping.
    fn audit(&self) -> Result<(), String> {
        Ok(())
    }
}

/// `theta^T x + beta sqrt(x^T (lambda I + m)^{-1} x)`.
pub fn ucb_index(theta: &[f64], m: &SymMat<f64>, x: &[f64], lambda: f64, beta: f64) -> Result<f64, LinalgError> {
    linalg::check_dim(theta.len(), x.len())?;
    Ok(linalg::dot(theta, x) + beta * linalg::quad_form_inv(m, x, lambda)?.max(0.0).sqrt())
}

/// Constants of the smoothed setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    /// Perturbation scale `sigma`.
    pub sigma: f64,
    /// Per-coordinate truncation `R`.
    pub truncation: f64,
    /// Arms per round `K`.
    pub arms: usize,
    /// Constant `c1` in `c1 sigma^2 / ln K`.
    pub c1: f64,
}

/// `c1 sigma^2 / ln K`.
pub fn smoothed_diversity(c1: f64, sigma: f64, arms: f64) -> f64 {
    c1 * sigma * sigma / arms.ln()
}

/// `lambda_x <- c1 sigma^2 / ln K` and `L <- 1 + sqrt(d) R`.
pub fn smoothed_params(p: &ConfidenceParams, s: &Smoothing) -> Result<ConfidenceParams, AgentError> {
    if s.arms < 2 {
        return Err(AgentError::Settings(format!("smoothed diversity needs K >= 2, got {}", s.arms)));
    }
    if !(s.sigma > 0.0 && s.truncation > 0.0 && s.c1 > 0.0) {
        return Err(AgentError::Settings("sigma, R and c1 must be positive".into()));
    }
    Ok(ConfidenceParams {
        lambda_x: smoothed_diversity(s.c1, s.sigma, s.arms as f64),
        norm_bound: 1.0 + (p.dim as f64).sqrt() * s.truncation,
        ..p.clone()
    })
}

/// Everything needed to instantiate a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySettings {
    pub params: ConfidenceParams,
    /// Phase exponent `alpha` of `phase-uniclub`.
    pub alpha: u32,
    /// Required by `saclub` and `sasclub`.
    pub smoothing: Option<Smoothing>,
}

impl PolicySettings {
    pub fn new(params: ConfidenceParams) -> Self {
        Self { params, alpha: 2, smoothing: None }
    }
}

pub fn build_policy(kind: PolicyKind, settings: &PolicySettings) -> Result<Box<dyn Policy>, AgentError> {
    settings.params.validate()?;
    let p = settings.params.clone();
    Ok(match kind {
        PolicyKind::LinUcbOne => Box::new(linucb::LinUcb::new(kind, p, true)),
        PolicyKind::LinUcbInd => Box::new(linucb::LinUcb::new(kind, p, false)),
        PolicyKind::Club => Box::new(graph::GraphPolicy::fixed(kind, p, 0)),
        PolicyKind::UniClub => {
            let t0 = p.t0_budget()?;
            Box::new(graph::GraphPolicy::fixed(kind, p, t0))
        }
        PolicyKind::PhaseUniClub => {
            if settings.alpha == 0 {
                return Err(AgentError::Settings("alpha must be at least 1".into()));
            }
            let clock = PhaseClock::new(&p, settings.alpha);
            Box::new(graph::GraphPolicy::phased(kind, p, clock))
        }
        PolicyKind::Sclub => Box::new(sets::SetPolicy::new(kind, p, 0)),
        PolicyKind::UniSclub => {
            let t0 = p.t0_budget()?;
            Box::new(sets::SetPolicy::new(kind, p, 2 * t0))
        }
        PolicyKind::SaClub | PolicyKind::SaSclub => {
            let s = settings
                .smoothing
                .ok_or_else(|| AgentError::Settings(format!("{kind} needs a smoothed context generator")))?;
            let p = smoothed_params(&p, &s)?;
            if kind == PolicyKind::SaClub {
                Box::new(graph::GraphPolicy::fixed(kind, p, 0))
            } else {
                Box::new(sets::SetPolicy::new(kind, p, 0))
            }
        }
    })
}

/// Round bookkeeping shared by every policy: input validation and the
/// select/observe handshake.
#[derive(Debug, Clone)]
struct Handshake {
    users: usize,
    dim: usize,
    pending: Option<(usize, usize, usize)>,
    last: Option<Decision>,
    uniform: usize,
}

impl Handshake {
    fn new(users: usize, dim: usize) -> Self {
        Self { users, dim, pending: None, last: None, uniform: 0 }
    }

    fn check_round(&self, round: &RoundInput) -> Result<(), AgentError> {
        if round.user >= self.users {
            return Err(AgentError::UserOutOfRange { user: round.user, users: self.users });
        }
        if round.arms.is_empty() {
            return Err(AgentError::EmptyArmSet(round.t));
        }
        linalg::check_dim(self.dim, round.arms.dim())?;
        Ok(())
    }

    fn commit(&mut self, d: Decision) -> usize {
        let arm = d.arm;
        if d.exploratory {
            self.uniform += 1;
        }
        self.pending = Some((d.t, d.user, d.arm));
        self.last = Some(d);
        arm
    }

    /// Consumes the pending selection; returns the chosen arm's features.
    fn settle<'a>(&mut self, round: &'a RoundInput, chosen: usize) -> Result<&'a [f64], AgentError> {
        match self.pending.take() {
            Some((t, user, arm)) if t == round.t && user == round.user && arm == chosen => {}
            Some((t, user, arm)) => {
                self.pending = Some((t, user, arm));
                return Err(AgentError::OutOfOrder(format!(
                    "pending selection is round {t}, user {user}, arm {arm}; got round {}, user {}, arm {chosen}",
                    round.t, round.user
                )));
            }
            None => return Err(AgentError::OutOfOrder(format!("round {} observed without a selection", round.t))),
        }
        if chosen >= round.arms.len() {
            return Err(AgentError::ArmOutOfRange { arm: chosen, arms: round.arms.len() });
        }
        Ok(round.arms.arm(chosen))
    }
}

fn uniform_decision(round: &RoundInput, rng: &mut StreamRng, beta: f64) -> Decision {
    use rand::Rng;
    let arm = rng.random_range(0..round.arms.len());
    Decision { t: round.t, user: round.user, arm, exploratory: true, cluster: Vec::new(), estimate: None, width: None, beta }
}

/// UCB argmax over `arms` for pooled statistics `(m, b)`; ties go to the
/// lowest index.
fn ucb_decision(
    round: &RoundInput,
    m: &SymMat<f64>,
    b: &[f64],
    lambda: f64,
    beta: f64,
    cluster: Vec<usize>,
) -> Result<Decision, AgentError> {
    let (arm, theta, width) = ucb_argmax(&round.arms, m, b, lambda, beta)?;
    Ok(Decision {
        t: round.t,
        user: round.user,
        arm,
        exploratory: false,
        cluster,
        estimate: Some(theta),
        width: Some(width),
        beta,
    })
}

fn ucb_argmax(arms: &ArmSet, m: &SymMat<f64>, b: &[f64], lambda: f64, beta: f64) -> Result<(usize, Vec<f64>, f64), AgentError> {
    let chol = Cholesky::regularized(m, lambda)?;
    let theta = chol.solve(b);
    let mut best = (0, f64::NEG_INFINITY, 0.0);
    for (k, x) in arms.iter().enumerate() {
        let w = beta * chol.inv_quad(x).max(0.0).sqrt();
        let v = linalg::dot(&theta, x) + w;
        if v > best.1 {
            best = (k, v, w);
        }
    }
    Ok((best.0, theta, best.2))
}

fn pooled(stats: &[UserStat], members: &[usize], dim: usize) -> Result<(SymMat<f64>, Vec<f64>), AgentError> {
    let mut m = SymMat::zeros(dim);
    let mut b = vec![0.0; dim];
    for &i in members {
        m.add_assign(stats[i].design())?;
        b.iter_mut().zip(stats[i].response()).for_each(|(a, &v)| *a += v);
    }
    Ok((m, b))
}
