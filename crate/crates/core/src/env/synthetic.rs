use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::{invalid, ArmPool, ArmSet, ContextGen, EnvError, EnvModel, NoiseModel, Sampler, StochasticContextGen};
use crate::linalg;
use crate::rng::StreamRng;

/// Sizes for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    /// Size of the sampled user population.
    pub users: usize,
    pub dim: usize,
    /// Size of the arm catalogue.
    pub total_arms: usize,
    pub clusters: usize,
    /// Users that actually arrive; they are split into `clusters` groups.
    pub selected_users: usize,
    /// `K`, arms offered per round.
    pub arms_per_round: usize,
}

fn unit_cube_vector(dim: usize, rng: &mut StreamRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = linalg::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Shuffles `n` users and deals them round-robin into `clusters` labels.
pub(crate) fn deal(n: usize, clusters: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut assignment = vec![0; n];
    for (slot, &i) in order.iter().enumerate() {
        assignment[i] = slot % clusters;
    }
    assignment
}

/// Random population and catalogue with planted clusters.
///
/// User and arm vectors have i.i.d. `U(-1, 1)` coordinates normalized to unit
/// length. `selected_users` of the users are kept and dealt round-robin into
/// `clusters` groups after a shuffle; each group's preference vector is the
/// mean of its members' vectors. Arm sets are uniform subsamples of the pool.
pub fn make_synthetic(
    spec: &SyntheticSpec,
    noise: NoiseModel,
    rng: &mut StreamRng,
) -> Result<(EnvModel, Arc<ArmPool>), EnvError> {
    let SyntheticSpec { users, dim, total_arms, clusters, selected_users, arms_per_round } = *spec;
    if dim == 0 || clusters == 0 || arms_per_round == 0 {
        return Err(invalid("dimension, cluster count and arm set size must be positive"));
    }
    if !(clusters <= selected_users && selected_users <= users) {
        return Err(invalid(format!(
            "need clusters <= selected_users <= users, got {clusters} / {selected_users} / {users}"
        )));
    }
    if total_arms < arms_per_round {
        return Err(invalid(format!("{total_arms} arms cannot supply arm sets of {arms_per_round}")));
    }

    let population: Vec<Vec<f64>> = (0..users).map(|_| unit_cube_vector(dim, rng)).collect();
    let mut pool = ArmSet::with_capacity(dim, total_arms);
    for _ in 0..total_arms {
        pool.push(&unit_cube_vector(dim, rng));
    }
    let pool = Arc::new(pool);

    let mut chosen = index::sample(rng, users, selected_users).into_vec();
    chosen.sort_unstable();
    let assignment = deal(selected_users, clusters, rng);
    let members = chosen.iter().map(|&i| population[i].clone()).collect();

    let contexts = ContextGen::Stochastic(StochasticContextGen::new(arms_per_round, Sampler::Pool(pool.clone()))?);
    let env = EnvModel::from_members(assignment, members, noise, contexts)?;
    Ok((env, pool))
}
