use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{invalid, ArmPool, ArmSet, EnvError};
use crate::linalg;
use crate::rng::StreamRng;
use crate::SymMatrix;

/// How `lambda_x = lambda_min(E[x x^T])` of a sampler is known.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Diversity {
    Exact(f64),
    MonteCarlo { value: f64, samples: usize },
}

impl Diversity {
    pub fn value(&self) -> f64 {
        match *self {
            Diversity::Exact(v) | Diversity::MonteCarlo { value: v, .. } => v,
        }
    }
}

/// Fixed distribution i.i.d. arm vectors are drawn from.
#[derive(Debug, Clone)]
pub enum Sampler {
    /// Uniform on the unit sphere.
    Sphere { dim: usize },
    /// Coordinates i.i.d. `U(-1, 1)`, then normalized to unit length.
    NormalizedCube { dim: usize },
    /// Uniform subsample (without replacement) of a catalogue.
    Pool(Arc<ArmPool>),
    /// Every arm equals the same vector.
    PointMass(Vec<f64>),
}

impl Sampler {
    pub fn dim(&self) -> usize {
        match self {
            Sampler::Sphere { dim } | Sampler::NormalizedCube { dim } => *dim,
            Sampler::Pool(p) => p.dim(),
            Sampler::PointMass(x) => x.len(),
        }
    }

    pub fn norm_bound(&self) -> f64 {
        match self {
            Sampler::Sphere { .. } | Sampler::NormalizedCube { .. } => 1.0,
            Sampler::Pool(p) => p.max_norm(),
            Sampler::PointMass(x) => linalg::norm(x),
        }
    }

    /// `lambda_min(E[x x^T])`.
    ///
    /// Both normalized samplers are invariant under coordinate sign flips and
    /// permutations, so their second moment is exactly `I / d`. For a pool
    /// each arm's marginal is uniform over the catalogue, so the second moment
    /// is the catalogue average.
    pub fn diversity(&self) -> Result<Diversity, EnvError> {
        Ok(match self {
            Sampler::Sphere { dim } | Sampler::NormalizedCube { dim } => Diversity::Exact(1.0 / *dim as f64),
            Sampler::Pool(p) => Diversity::Exact(linalg::min_eigenvalue(&p.second_moment())?.max(0.0)),
            Sampler::PointMass(x) => {
                let m = SymMatrix::zeros(x.len()).rank1_add(x)?;
                Diversity::Exact(linalg::min_eigenvalue(&m)?.max(0.0))
            }
        })
    }

    /// Monte-Carlo `lambda_min` of the average `x x^T` over `samples` draws.
    pub fn estimate_diversity(&self, samples: usize, rng: &mut StreamRng) -> Result<Diversity, EnvError> {
        let mut m = SymMatrix::zeros(self.dim());
        let mut buf = ArmSet::with_capacity(self.dim(), 1);
        for _ in 0..samples {
            buf.data.clear();
            self.draw_into(1, rng, &mut buf);
            m.rank1_update(buf.arm(0))?;
        }
        let value = linalg::min_eigenvalue(&m.scaled(1.0 / samples.max(1) as f64))?;
        Ok(Diversity::MonteCarlo { value, samples })
    }

    fn draw_into(&self, k: usize, rng: &mut StreamRng, out: &mut ArmSet) {
        match self {
            Sampler::Sphere { dim } => {
                for _ in 0..k {
                    let v = loop {
                        let v: Vec<f64> = (0..*dim).map(|_| StandardNormal.sample(rng)).collect();
                        if linalg::norm(&v) > 1e-12 {
                            break v;
                        }
                    };
                    let n = linalg::norm(&v);
                    out.data.extend(v.iter().map(|x| x / n));
                }
            }
            Sampler::NormalizedCube { dim } => {
                for _ in 0..k {
                    let v = loop {
                        let v: Vec<f64> = (0..*dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                        if linalg::norm(&v) > 1e-12 {
                            break v;
                        }
                    };
                    let n = linalg::norm(&v);
                    out.data.extend(v.iter().map(|x| x / n));
                }
            }
            Sampler::Pool(pool) => {
                for i in index::sample(rng, pool.len(), k) {
                    out.push(pool.arm(i));
                }
            }
            Sampler::PointMass(x) => {
                for _ in 0..k {
                    out.push(x);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StochasticContextGen {
    arms: usize,
    sampler: Sampler,
    diversity: Diversity,
}

impl StochasticContextGen {
    pub fn new(arms: usize, sampler: Sampler) -> Result<Self, EnvError> {
        let diversity = sampler.diversity()?;
        Self::with_diversity(arms, sampler, diversity)
    }

    pub fn with_diversity(arms: usize, sampler: Sampler, diversity: Diversity) -> Result<Self, EnvError> {
        if arms == 0 || sampler.dim() == 0 {
            return Err(invalid("arm set size and dimension must be positive"));
        }
        if let Sampler::Pool(p) = &sampler {
            if p.len() < arms {
                return Err(invalid(format!("pool of {} arms cannot supply {arms} distinct arms", p.len())));
            }
        }
        Ok(Self { arms, sampler, diversity })
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    pub fn diversity(&self) -> Diversity {
        self.diversity
    }
}

/// How the smoothed adversary picks the means `mu` before perturbation.
#[derive(Debug, Clone)]
pub enum Adversary {
    /// Replays a fixed catalogue in order, `K` consecutive entries per round.
    FixedGrid(Arc<ArmPool>),
    /// Puts every mean on the line spanned by the least-explored direction
    /// of the chosen-arm history, refreshed every `refresh` rounds.
    Spiteful { refresh: usize },
}

#[derive(Debug, Clone)]
pub struct SmoothedContextGen {
    arms: usize,
    dim: usize,
    adversary: Adversary,
    sigma: f64,
    truncation: f64,
}

impl SmoothedContextGen {
    pub fn new(arms: usize, dim: usize, adversary: Adversary, sigma: f64, truncation: f64) -> Result<Self, EnvError> {
        if arms == 0 || dim == 0 {
            return Err(invalid("arm set size and dimension must be positive"));
        }
        if !(sigma > 0.0 && truncation > 0.0) {
            return Err(invalid("sigma and truncation must be positive"));
        }
        match &adversary {
            Adversary::FixedGrid(p) if p.dim() != dim || p.is_empty() => {
                return Err(invalid("fixed-grid pool must be non-empty with matching dimension"))
            }
            Adversary::Spiteful { refresh: 0 } => return Err(invalid("refresh interval must be positive")),
            _ => {}
        }
        Ok(Self { arms, dim, adversary, sigma, truncation })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn adversary(&self) -> &Adversary {
        &self.adversary
    }

    /// `1 + sqrt(d) R`.
    pub fn norm_bound(&self) -> f64 {
        1.0 + (self.dim as f64).sqrt() * self.truncation
    }
}

#[derive(Debug, Clone)]
pub enum ContextGen {
    Stochastic(StochasticContextGen),
    Smoothed(SmoothedContextGen),
}

impl ContextGen {
    pub fn dim(&self) -> usize {
        match self {
            ContextGen::Stochastic(g) => g.sampler.dim(),
            ContextGen::Smoothed(g) => g.dim,
        }
    }

    pub fn arms(&self) -> usize {
        match self {
            ContextGen::Stochastic(g) => g.arms,
            ContextGen::Smoothed(g) => g.arms,
        }
    }

    pub fn norm_bound(&self) -> f64 {
        match self {
            ContextGen::Stochastic(g) => g.sampler.norm_bound(),
            ContextGen::Smoothed(g) => g.norm_bound(),
        }
    }

    /// Diversity of the i.i.d. regime; `None` for smoothed contexts.
    pub fn diversity(&self) -> Option<Diversity> {
        match self {
            ContextGen::Stochastic(g) => Some(g.diversity),
            ContextGen::Smoothed(_) => None,
        }
    }

    pub(crate) fn refresh_interval(&self) -> usize {
        match self {
            ContextGen::Smoothed(SmoothedContextGen { adversary: Adversary::Spiteful { refresh }, .. }) => *refresh,
            _ => 0,
        }
    }

    pub(crate) fn generate(&self, t: usize, rng: &mut StreamRng, history: &ContextHistory) -> ArmSet {
        let mut out = ArmSet::with_capacity(self.dim(), self.arms());
        match self {
            ContextGen::Stochastic(g) => g.sampler.draw_into(g.arms, rng, &mut out),
            ContextGen::Smoothed(g) => {
                let mut mu = vec![0.0; g.dim];
                for k in 0..g.arms {
                    match &g.adversary {
                        Adversary::FixedGrid(pool) => {
                            let idx = ((t.saturating_sub(1)) * g.arms + k) % pool.len();
                            mu.copy_from_slice(pool.arm(idx));
                            let n = linalg::norm(&mu);
                            if n > 1.0 {
                                mu.iter_mut().for_each(|v| *v /= n);
                            }
                        }
                        Adversary::Spiteful { .. } => {
                            let c = if g.arms == 1 { 1.0 } else { -1.0 + 2.0 * k as f64 / (g.arms - 1) as f64 };
                            mu.iter_mut().zip(&history.direction).for_each(|(m, v)| *m = c * v);
                        }
                    }
                    let eps = sample_truncated_gaussian(g.sigma, g.truncation, g.dim, rng);
                    mu.iter_mut().zip(&eps).for_each(|(m, e)| *m += e);
                    out.push(&mu);
                }
            }
        }
        out
    }
}

/// Chosen-arm digest the spiteful adversary reacts to.
#[derive(Debug, Clone)]
pub struct ContextHistory {
    digest: SymMatrix,
    direction: Vec<f64>,
    refresh: usize,
    since_refresh: usize,
}

impl ContextHistory {
    pub(crate) fn new(dim: usize, refresh: usize) -> Self {
        let mut direction = vec![0.0; dim];
        direction[0] = 1.0;
        Self { digest: SymMatrix::zeros(dim), direction, refresh, since_refresh: 0 }
    }

    /// Current least-explored direction (unit vector).
    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// Records a served arm. A no-op unless the adversary tracks history.
    pub fn record(&mut self, x: &[f64]) {
        if self.refresh == 0 {
            return;
        }
        self.digest.rank1_update(x).expect("dims match");
        self.since_refresh += 1;
        if self.since_refresh >= self.refresh {
            self.since_refresh = 0;
            if let Ok(e) = linalg::sym_eigen(&self.digest) {
                self.direction = e.vectors[0].clone();
            }
        }
    }
}

/// `N(0, sigma^2 I_d)` conditioned on every coordinate lying in `[-R, R]`,
/// by per-coordinate rejection.
pub fn sample_truncated_gaussian(sigma: f64, truncation: f64, dim: usize, rng: &mut StreamRng) -> Vec<f64> {
    assert!(sigma > 0.0 && truncation > 0.0, "sigma and truncation must be positive");
    (0..dim)
        .map(|_| loop {
            let z: f64 = StandardNormal.sample(rng);
            let v = sigma * z;
            if v.abs() <= truncation {
                break v;
            }
        })
        .collect()
}
