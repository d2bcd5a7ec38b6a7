use super::{pooled, ucb_decision, AgentError, Decision, Handshake, Policy, PolicyKind, PhaseRecord};
use crate::clusters::ConfidenceParams;
use crate::env::RoundInput;
use crate::rng::StreamRng;
use crate::UserStat;

/// LinUCB with one shared statistic (`shared`) or one per user.
pub(super) struct LinUcb {
    kind: PolicyKind,
    params: ConfidenceParams,
    shared: bool,
    users: Vec<UserStat>,
    global: UserStat,
    io: Handshake,
}

impl LinUcb {
    pub(super) fn new(kind: PolicyKind, params: ConfidenceParams, shared: bool) -> Self {
        let (u, d) = (params.users, params.dim);
        Self { kind, shared, users: vec![UserStat::new(d); u], global: UserStat::new(d), io: Handshake::new(u, d), params }
    }
}

impl Policy for LinUcb {
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn params(&self) -> &ConfidenceParams {
        &self.params
    }

    fn select(&mut self, round: &RoundInput, _rng: &mut StreamRng) -> Result<usize, AgentError> {
        self.io.check_round(round)?;
        let beta = self.params.beta_for_round(round.t);
        let d = if self.shared {
            let g = &self.global;
            ucb_decision(round, g.design(), g.response(), self.params.lambda, beta, (0..self.users.len()).collect())?
        } else {
            let (m, b) = pooled(&self.users, &[round.user], self.params.dim)?;
            ucb_decision(round, &m, &b, self.params.lambda, beta, vec![round.user])?
        };
        Ok(self.io.commit(d))
    }

    fn observe(&mut self, round: &RoundInput, chosen: usize, reward: f64) -> Result<(), AgentError> {
        let x = self.io.settle(round, chosen)?;
        self.users[round.user].update(x, reward, self.params.lambda)?;
        if self.shared {
            self.global.update(x, reward, self.params.lambda)?;
        }
        Ok(())
    }

    fn partition(&self) -> Vec<Vec<usize>> {
        if self.shared {
            vec![(0..self.users.len()).collect()]
        } else {
            (0..self.users.len()).map(|i| vec![i]).collect()
        }
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
        0
    }

    fn phase_records(&self) -> Option<&[PhaseRecord]> {
        None
    }
}
