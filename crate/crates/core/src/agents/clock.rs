use serde::Serialize;

use crate::clusters::ConfidenceParams;

/// What kind of round the phase clock schedules next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseStep {
    /// Within the first `T^init` rounds.
    Init,
    /// First `T^(s)` rounds of phase `s`.
    Explore(u32),
    /// Remaining rounds of phase `s`.
    Ucb(u32),
}

/// Observed bookkeeping of one phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseRecord {
    pub phase: u32,
    /// Scheduled exploration length `T^(s)`.
    pub explore_len: usize,
    /// Scheduled phase length `2^(alpha s) T^(s)`.
    pub planned_len: usize,
    /// Uniform rounds actually played in this phase.
    pub uniform_rounds: usize,
    /// Rounds actually played in this phase.
    pub rounds: usize,
}

/// Schedule of the phase-based policy: `T^init` uniform rounds, then phases
/// `s = 0, 1, ...` of `2^(alpha s) T^(s)` rounds whose first `T^(s)` rounds
/// are uniform.
#[derive(Debug, Clone)]
pub struct PhaseClock {
    params: ConfidenceParams,
    alpha: u32,
    t_init: usize,
    init_seen: usize,
    phase: u32,
    tau: usize,
    records: Vec<PhaseRecord>,
}

impl PhaseClock {
    pub fn new(params: &ConfidenceParams, alpha: u32) -> Self {
        Self {
            params: params.clone(),
            alpha,
            t_init: params.t_init(),
            init_seen: 0,
            phase: 0,
            tau: 0,
            records: Vec::new(),
        }
    }

    pub fn t_init(&self) -> usize {
        self.t_init
    }

    pub fn explore_len(&self, s: u32) -> usize {
        self.params.t_phase(s)
    }

    /// `2^(alpha s) T^(s)`, saturating.
    pub fn phase_len(&self, s: u32) -> usize {
        let shift = self.alpha.saturating_mul(s);
        let factor = (shift < usize::BITS).then(|| 1usize << shift);
        factor.and_then(|f| f.checked_mul(self.explore_len(s))).unwrap_or(usize::MAX)
    }

    /// Step type of the next round.
    pub fn current(&self) -> PhaseStep {
        if self.init_seen < self.t_init {
            PhaseStep::Init
        } else if self.tau < self.explore_len(self.phase) {
            PhaseStep::Explore(self.phase)
        } else {
            PhaseStep::Ucb(self.phase)
        }
    }

    /// Advances past the round reported by [`current`](Self::current).
    pub fn tick(&mut self) {
        let step = self.current();
        if step == PhaseStep::Init {
            self.init_seen += 1;
            return;
        }
        if self.records.len() <= self.phase as usize {
            self.records.push(PhaseRecord {
                phase: self.phase,
                explore_len: self.explore_len(self.phase),
                planned_len: self.phase_len(self.phase),
                uniform_rounds: 0,
                rounds: 0,
            });
        }
        let rec = self.records.last_mut().expect("pushed above");
        rec.rounds += 1;
        if matches!(step, PhaseStep::Explore(_)) {
            rec.uniform_rounds += 1;
        }
        self.tau += 1;
        if self.tau >= self.phase_len(self.phase) {
            self.phase += 1;
            self.tau = 0;
        }
    }

    pub fn records(&self) -> &[PhaseRecord] {
        &self.records
    }
}

/// Doubling phases of the set-based policies: phase `s >= 1` covers rounds
/// `2^(s-1) ..= 2^s - 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SclubPhaseClock {
    phase: u32,
}

impl SclubPhaseClock {
    pub fn phase(&self) -> u32 {
        self.phase
    }

    /// Moves to round `t`; true iff `t` opens a new phase.
    pub fn enter(&mut self, t: usize) -> bool {
        let s = usize::BITS - t.max(1).leading_zeros();
        let fresh = s != self.phase;
        self.phase = s;
        fresh
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_schedule() {
        let p = ConfidenceParams { lambda_x: 0.1, ..ConfidenceParams::new(20, 10, 1) };
        let p = ConfidenceParams { exploration_scale: 2.0 / p.t_phase(0) as f64, ..p };
        let mut c = PhaseClock::new(&p, 2);
        let mut steps = Vec::new();
        for _ in 0..c.t_init() + 2 + 16 + 128 {
            steps.push(c.current());
            c.tick();
        }
        let init = c.t_init();
        assert!(steps[..init].iter().all(|s| *s == PhaseStep::Init));
        assert_eq!(&steps[init..init + 3], &[PhaseStep::Explore(0), PhaseStep::Explore(0), PhaseStep::Explore(1)]);
        let recs = c.records();
        assert_eq!(recs.len(), 3);
        for (s, r) in recs.iter().enumerate() {
            assert_eq!(r.explore_len, p.t_phase(s as u32));
            assert_eq!(r.uniform_rounds, r.explore_len);
            assert_eq!(r.rounds, r.planned_len);
            assert_eq!(r.planned_len, (1 << (2 * s)) * r.explore_len);
        }
        assert_eq!(c.current(), PhaseStep::Explore(3));
    }

    #[test]
    fn saturating_length() {
        let p = ConfidenceParams::new(20, 10, 1);
        let c = PhaseClock::new(&p, 2);
        assert_eq!(c.phase_len(40), usize::MAX);
    }

    #[test]
    fn sclub_phases() {
        let mut c = SclubPhaseClock::default();
        let starts: Vec<usize> = (1..=20).filter(|&t| c.enter(t)).collect();
        assert_eq!(starts, vec![1, 2, 4, 8, 16]);
        assert_eq!(c.phase(), 5);
    }
}
