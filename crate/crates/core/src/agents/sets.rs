use super::{ucb_decision, uniform_decision, AgentError, Decision, Handshake, Policy, PolicyKind, SclubPhaseClock};
use crate::clusters::{delete_check, ClusterSets, ConfidenceParams};
use crate::env::RoundInput;
use crate::linalg;
use crate::rng::StreamRng;
use crate::UserStat;

/// The SCLUB family: `sclub`, `unisclub` and `sasclub`.
///
/// Rounds `t <= explore` are uniform and only accumulate statistics; at
/// `t = explore` every user is split from its cluster while it disagrees
/// with a member, then checked clusters are merged. Afterwards each round
/// splits the arriving user if needed, marks it checked and merges.
pub(super) struct SetPolicy {
    kind: PolicyKind,
    params: ConfidenceParams,
    users: Vec<UserStat>,
    sets: ClusterSets<f64>,
    explore: usize,
    clock: SclubPhaseClock,
    io: Handshake,
}

impl SetPolicy {
    pub(super) fn new(kind: PolicyKind, params: ConfidenceParams, explore: usize) -> Self {
        let (u, d) = (params.users, params.dim);
        Self {
            kind,
            users: vec![UserStat::new(d); u],
            sets: ClusterSets::new(u, d, params.lambda),
            explore,
            clock: SclubPhaseClock::default(),
            io: Handshake::new(u, d),
            params,
        }
    }

    #[cfg(test)]
    pub(super) fn is_checked_user(&self, user: usize) -> bool {
        self.sets.is_user_checked(user)
    }

    /// Splits `user` off its cluster if some other member disagrees with it.
    fn split(&mut self, user: usize) -> Result<bool, AgentError> {
        let id = self.sets.cluster_of(user)?;
        let c = self.sets.get(id).expect("live cluster");
        let me = &self.users[user];
        let violated = c.members().iter().any(|&l| l != user && delete_check(me, &self.users[l], &self.params));
        if violated {
            self.sets.split_user(user, id, me)?;
        }
        Ok(violated)
    }

    /// Merges checked clusters in ascending id order until no pair is close.
    fn merge(&mut self) -> Result<(), AgentError> {
        'scan: loop {
            let ids: Vec<usize> = self.sets.ids().filter(|&j| self.sets.is_checked(j)).collect();
            for (k, &a) in ids.iter().enumerate() {
                for &b in &ids[k + 1..] {
                    let (sa, sb) = (self.sets.get(a).unwrap().stats(), self.sets.get(b).unwrap().stats());
                    let dist = linalg::distance(sa.theta(), sb.theta());
                    if dist < self.params.radius(sa.count()) + self.params.radius(sb.count()) {
                        self.sets.merge_clusters(a, b)?;
                        continue 'scan;
                    }
                }
            }
            return Ok(());
        }
    }

    fn bulk_cluster(&mut self) -> Result<(), AgentError> {
        loop {
            let mut changed = false;
            for i in 0..self.users.len() {
                changed |= self.split(i)?;
            }
            if !changed {
                break;
            }
        }
        self.merge()
    }
}

impl Policy for SetPolicy {
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn params(&self) -> &ConfidenceParams {
        &self.params
    }

    fn select(&mut self, round: &RoundInput, rng: &mut StreamRng) -> Result<usize, AgentError> {
        self.io.check_round(round)?;
        let beta = self.params.beta_for_round(round.t);
        let d = if round.t <= self.explore {
            uniform_decision(round, rng, beta)
        } else {
            let id = self.sets.cluster_of(round.user)?;
            let c = self.sets.get(id).expect("live cluster");
            let s = c.stats();
            let members = c.members().iter().copied().collect();
            ucb_decision(round, s.design(), s.response(), self.params.lambda, beta, members)?
        };
        Ok(self.io.commit(d))
    }

    fn observe(&mut self, round: &RoundInput, chosen: usize, reward: f64) -> Result<(), AgentError> {
        let x = self.io.settle(round, chosen)?;
        let (t, i) = (round.t, round.user);
        if self.clock.enter(t) {
            self.sets.reset_checks();
        }
        self.users[i].update(x, reward, self.params.lambda)?;
        self.sets.record(i, x, reward)?;
        if t < self.explore {
            self.sets.mark_checked(i);
            return Ok(());
        }
        if t == self.explore {
            self.sets.mark_checked(i);
            return self.bulk_cluster();
        }
        self.split(i)?;
        self.sets.mark_checked(i);
        self.merge()
    }

    fn partition(&self) -> Vec<Vec<usize>> {
        self.sets.partition()
    }

    fn user_stats(&self) -> &[UserStat] {
        &self.users
    }

    fn last_decision(&self) -> Option<&Decision> {
        self.io.last.as_ref()
    }

    fn uniform_rounds(&self) -> usize {
        self.io.uniform
    }

    fn exploration_rounds(&self) -> usize {
        self.explore
    }

    fn audit(&self) -> Result<(), String> {
        self.sets.audit(&self.users)
    }
}
