use std::collections::{BTreeMap, BTreeSet};

use super::{canonical_partition, ClusterError, Stats};
use crate::linalg::SymMat;
use crate::Scalar;

/// A live cluster: its roster and aggregate statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<T> {
    members: BTreeSet<usize>,
    stats: Stats<T>,
}

impl<T: Scalar> Cluster<T> {
    pub fn members(&self) -> &BTreeSet<usize> {
        &self.members
    }

    /// Aggregate `M^j`, `b^j`, `T^j` and `theta^j`.
    pub fn stats(&self) -> &Stats<T> {
        &self.stats
    }
}

/// Set-based clusters with fresh ids, split/merge and per-user checked flags.
///
/// Ids are allocated from a monotone counter and never reused. A cluster is
/// checked iff all its members are.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSets<T> {
    lambda: T,
    clusters: BTreeMap<usize, Cluster<T>>,
    owner: Vec<usize>,
    checked: Vec<bool>,
    next_id: usize,
}

impl<T: Scalar> ClusterSets<T> {
    /// One cluster (id 0) holding every user, with zero statistics.
    pub fn new(users: usize, dim: usize, lambda: T) -> Self {
        let mut clusters = BTreeMap::new();
        clusters.insert(0, Cluster { members: (0..users).collect(), stats: Stats::new(dim) });
        Self { lambda, clusters, owner: vec![0; users], checked: vec![false; users], next_id: 1 }
    }

    pub fn users(&self) -> usize {
        self.owner.len()
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.clusters.keys().copied()
    }

    pub fn get(&self, id: usize) -> Option<&Cluster<T>> {
        self.clusters.get(&id)
    }

    pub fn cluster_of(&self, user: usize) -> Result<usize, ClusterError> {
        self.owner.get(user).copied().ok_or(ClusterError::UserOutOfRange { user, users: self.users() })
    }

    /// Adds one observation of `user` to its cluster's aggregate.
    pub fn record(&mut self, user: usize, x: &[T], r: T) -> Result<(), ClusterError> {
        let id = self.cluster_of(user)?;
        let c = self.clusters.get_mut(&id).expect("owner points at a live cluster");
        c.stats.accumulate(x, r)?;
        c.stats.refresh(self.lambda)?;
        Ok(())
    }

    /// Moves `user` out of cluster `id` into a fresh singleton carrying
    /// `stats`; returns the new id. An emptied cluster is dropped.
    pub fn split_user(&mut self, user: usize, id: usize, stats: &Stats<T>) -> Result<usize, ClusterError> {
        let c = self.clusters.get_mut(&id).ok_or(ClusterError::UnknownCluster(id))?;
        if !c.members.remove(&user) {
            return Err(ClusterError::NotMember { user, cluster: id });
        }
        if c.members.is_empty() {
            self.clusters.remove(&id);
        } else {
            c.stats.sub(stats)?;
            c.stats.refresh(self.lambda)?;
        }
        let fresh = self.next_id;
        self.next_id += 1;
        self.clusters.insert(fresh, Cluster { members: BTreeSet::from([user]), stats: stats.clone() });
        self.owner[user] = fresh;
        Ok(fresh)
    }

    /// Folds cluster `b` into cluster `a`; both must be checked.
    pub fn merge_clusters(&mut self, a: usize, b: usize) -> Result<(), ClusterError> {
        for id in [a, b] {
            if !self.clusters.contains_key(&id) {
                return Err(ClusterError::UnknownCluster(id));
            }
            if !self.is_checked(id) {
                return Err(ClusterError::Unchecked(id));
            }
        }
        if a == b {
            return Err(ClusterError::InvalidParams(format!("cannot merge cluster {a} with itself")));
        }
        let gone = self.clusters.remove(&b).expect("checked above");
        let keep = self.clusters.get_mut(&a).expect("checked above");
        keep.stats.add(&gone.stats)?;
        keep.stats.refresh(self.lambda)?;
        for &u in &gone.members {
            self.owner[u] = a;
        }
        keep.members.extend(gone.members);
        Ok(())
    }

    pub fn mark_checked(&mut self, user: usize) {
        self.checked[user] = true;
    }

    pub fn is_user_checked(&self, user: usize) -> bool {
        self.checked[user]
    }

    pub fn reset_checks(&mut self) {
        self.checked.iter_mut().for_each(|c| *c = false);
    }

    pub fn is_checked(&self, id: usize) -> bool {
        self.clusters.get(&id).is_some_and(|c| c.members.iter().all(|&u| self.checked[u]))
    }

    pub fn partition(&self) -> Vec<Vec<usize>> {
        canonical_partition(self.clusters.values().map(|c| c.members.iter().copied().collect()).collect())
    }

    /// Checks that rosters partition the users, owners agree with rosters,
    /// and every aggregate equals the sum of its members' statistics (counts
    /// exactly, matrices and vectors within `1e-10` relative).
    pub fn audit(&self, users: &[Stats<T>]) -> Result<(), String> {
        if users.len() != self.users() {
            return Err(format!("{} user statistics for {} users", users.len(), self.users()));
        }
        let mut seen = vec![false; self.users()];
        for (&id, c) in &self.clusters {
            if c.members.is_empty() {
                return Err(format!("cluster {id} is empty"));
            }
            let dim = c.stats.dim();
            let mut s = SymMat::<T>::zeros(dim);
            let mut b = vec![T::zero(); dim];
            let mut count = 0u64;
            for &u in &c.members {
                if std::mem::replace(&mut seen[u], true) {
                    return Err(format!("user {u} appears in two clusters"));
                }
                if self.owner[u] != id {
                    return Err(format!("user {u} listed in {id} but owned by {}", self.owner[u]));
                }
                s.add_assign(users[u].design()).map_err(|e| e.to_string())?;
                users[u].response().iter().zip(&mut b).for_each(|(&x, y)| *y += x);
                count += users[u].count();
            }
            if count != c.stats.count() {
                return Err(format!("cluster {id}: count {} != member sum {count}", c.stats.count()));
            }
            let close = |x: T, y: T, scale: f64| (x - y).abs().as_f64() <= 1e-10 * scale.max(1.0);
            let ms = s.frobenius().as_f64();
            if !c.stats.design().as_slice().iter().zip(s.as_slice()).all(|(&x, &y)| close(x, y, ms)) {
                return Err(format!("cluster {id}: design aggregate drifted"));
            }
            let bs = b.iter().map(|v| v.abs().as_f64()).fold(0.0, f64::max);
            if !c.stats.response().iter().zip(&b).all(|(&x, &y)| close(x, y, bs)) {
                return Err(format!("cluster {id}: response aggregate drifted"));
            }
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(format!("user {u} belongs to no cluster"));
        }
        Ok(())
    }
}
