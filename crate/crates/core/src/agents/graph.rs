use super::{pooled, ucb_decision, uniform_decision, AgentError, Decision, Handshake, PhaseClock, PhaseRecord, PhaseStep, Policy, PolicyKind};
use crate::clusters::{delete_check, ConfidenceParams, UserGraph};
use crate::env::RoundInput;
use crate::rng::StreamRng;
use crate::UserStat;

enum Schedule {
    /// Uniform for `t <= t0`, then UCB on the connected component. Edges are
    /// tested every round.
    Fixed { t0: usize },
    /// Phase clock; UCB on neighbours plus self. No deletions during `T^init`.
    Phased(PhaseClock),
}

/// The CLUB family: `club`, `uniclub`, `saclub` and `phase-uniclub`.
pub(super) struct GraphPolicy {
    kind: PolicyKind,
    params: ConfidenceParams,
    users: Vec<UserStat>,
    graph: UserGraph,
    schedule: Schedule,
    io: Handshake,
}

impl GraphPolicy {
    fn with(kind: PolicyKind, params: ConfidenceParams, schedule: Schedule) -> Self {
        let (u, d) = (params.users, params.dim);
        Self { kind, users: vec![UserStat::new(d); u], graph: UserGraph::complete(u), schedule, io: Handshake::new(u, d), params }
    }

    pub(super) fn fixed(kind: PolicyKind, params: ConfidenceParams, t0: usize) -> Self {
        Self::with(kind, params, Schedule::Fixed { t0 })
    }

    pub(super) fn phased(kind: PolicyKind, params: ConfidenceParams, clock: PhaseClock) -> Self {
        Self::with(kind, params, Schedule::Phased(clock))
    }
}

impl Policy for GraphPolicy {
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn params(&self) -> &ConfidenceParams {
        &self.params
    }

    fn select(&mut self, round: &RoundInput, rng: &mut StreamRng) -> Result<usize, AgentError> {
        self.io.check_round(round)?;
        let beta = self.params.beta_for_round(round.t);
        let cluster = match &self.schedule {
            Schedule::Fixed { t0 } if round.t <= *t0 => None,
            Schedule::Fixed { .. } => Some(self.graph.connected_component(round.user)),
            Schedule::Phased(clock) => match clock.current() {
                PhaseStep::Init | PhaseStep::Explore(_) => None,
                PhaseStep::Ucb(_) => Some(self.graph.neighbors_plus_self(round.user)),
            },
        };
        let d = match cluster {
            None => uniform_decision(round, rng, beta),
            Some(v) => {
                let (m, b) = pooled(&self.users, &v, self.params.dim)?;
                ucb_decision(round, &m, &b, self.params.lambda, beta, v)?
            }
        };
        Ok(self.io.commit(d))
    }

    fn observe(&mut self, round: &RoundInput, chosen: usize, reward: f64) -> Result<(), AgentError> {
        let x = self.io.settle(round, chosen)?;
        let i = round.user;
        self.users[i].update(x, reward, self.params.lambda)?;
        let prune = match &mut self.schedule {
            Schedule::Fixed { .. } => true,
            Schedule::Phased(clock) => {
                let init = clock.current() == PhaseStep::Init;
                clock.tick();
                !init
            }
        };
        if prune {
            let doomed: Vec<usize> = self
                .graph
                .neighbors(i)
                .filter(|&l| delete_check(&self.users[i], &self.users[l], &self.params))
                .collect();
            for l in doomed {
                self.graph.remove_edge(i, l);
            }
        }
        Ok(())
    }

    fn partition(&self) -> Vec<Vec<usize>> {
        self.graph.components()
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
        match &self.schedule {
            Schedule::Fixed { t0 } => *t0,
            Schedule::Phased(clock) => clock.t_init(),
        }
    }

    fn phase_records(&self) -> Option<&[PhaseRecord]> {
        match &self.schedule {
            Schedule::Phased(clock) => Some(clock.records()),
            Schedule::Fixed { .. } => None,
        }
    }

    fn audit(&self) -> Result<(), String> {
        if !self.graph.is_symmetric() {
            return Err("adjacency lost symmetry".into());
        }
        Ok(())
    }
}
