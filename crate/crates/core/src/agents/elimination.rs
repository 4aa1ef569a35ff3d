//! Prior elimination with Thompson sampling or UCB.

use super::{posterior_bank, ucb_argmax, Agent, AgentError, AgentKind, AgentParams, ConfidenceSchedule, JointArgmax, Selection};
use crate::gp::PosteriorState;
use crate::priors::Hyperprior;
use crate::rng::StreamRng;

/// Active set and per-prior prediction-error statistics.
#[derive(Debug, Clone)]
pub struct EliminationState {
    active: Vec<bool>,
    count: Vec<usize>,
    eta_sum: Vec<f64>,
    threshold_sum: Vec<f64>,
    eliminated_at: Vec<Option<usize>>,
}

impl EliminationState {
    pub fn new(num_priors: usize) -> Self {
        EliminationState {
            active: vec![true; num_priors],
            count: vec![0; num_priors],
            eta_sum: vec![0.0; num_priors],
            threshold_sum: vec![0.0; num_priors],
            eliminated_at: vec![None; num_priors],
        }
    }

    pub fn is_active(&self, p: usize) -> bool {
        self.active[p]
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| i)
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// `|S_{t,p}|`.
    pub fn count(&self, p: usize) -> usize {
        self.count[p]
    }

    /// `Σ_{i∈S_{t,p}} η_i`.
    pub fn eta_sum(&self, p: usize) -> f64 {
        self.eta_sum[p]
    }

    /// `Σ_{i∈S_{t,p}} √β_i σ_{i,p}(x_i)`.
    pub fn threshold_sum(&self, p: usize) -> f64 {
        self.threshold_sum[p]
    }

    pub fn eliminated_at(&self, p: usize) -> Option<usize> {
        self.eliminated_at[p]
    }

    /// Records step `t` for the selected prior `p` and returns the threshold
    /// `V_t` and whether `p` was eliminated. Statistics of eliminated priors
    /// are frozen.
    pub fn record(&mut self, t: usize, p: usize, eta: f64, weighted_sd: f64, xi: f64) -> (f64, bool) {
        if !self.active[p] {
            return (f64::NAN, false);
        }
        self.count[p] += 1;
        self.eta_sum[p] += eta;
        self.threshold_sum[p] += weighted_sd;
        let v = (xi * self.count[p] as f64).sqrt() + self.threshold_sum[p];
        let out = self.eta_sum[p].abs() > v;
        if out {
            self.active[p] = false;
            self.eliminated_at[p] = Some(t);
        }
        (v, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    Thompson,
    Ucb,
}

/// PE-GP-TS and PE-GP-UCB.
pub struct EliminationAgent {
    kind: AgentKind,
    rule: Rule,
    bank: Vec<PosteriorState>,
    schedule: ConfidenceSchedule,
    state: EliminationState,
    rng: StreamRng,
    pending: Option<(usize, usize)>,
    step: usize,
    sample: Vec<f64>,
    scratch: Vec<f64>,
}

impl EliminationAgent {
    pub fn new(kind: AgentKind, hyperprior: &Hyperprior, params: AgentParams, rng: StreamRng) -> Result<Self, AgentError> {
        let rule = match kind {
            AgentKind::PeGpTs => Rule::Thompson,
            AgentKind::PeGpUcb => Rule::Ucb,
            other => return Err(AgentError::Unknown(other.to_string())),
        };
        let n = hyperprior.num_arms();
        Ok(EliminationAgent {
            kind,
            rule,
            bank: posterior_bank(hyperprior.priors(), params.noise_var)?,
            schedule: ConfidenceSchedule::new(params.delta, n, hyperprior.len(), params.noise_var)?,
            state: EliminationState::new(hyperprior.len()),
            rng,
            pending: None,
            step: 0,
            sample: vec![0.0; n],
            scratch: Vec::new(),
        })
    }

    pub fn state(&self) -> &EliminationState {
        &self.state
    }

    pub fn schedule(&self) -> &ConfidenceSchedule {
        &self.schedule
    }

    /// Draws one posterior function per active prior and returns the best
    /// `(arm, prior)`.
    fn select_thompson(&mut self) -> (usize, usize) {
        let mut best = JointArgmax::new();
        for p in 0..self.bank.len() {
            if !self.state.is_active(p) {
                continue;
            }
            self.bank[p].sample_into(&mut self.rng, &mut self.sample, &mut self.scratch);
            let (arm, v) = super::argmax(&self.sample);
            best.offer(v, arm, p);
        }
        best.get().expect("active set is nonempty")
    }

    fn select_ucb(&self, t: usize) -> (usize, usize) {
        let sqrt_beta = self.schedule.beta(t).sqrt();
        let mut best = JointArgmax::new();
        for p in self.state.active() {
            let (arm, v) = ucb_argmax(&self.bank[p], sqrt_beta);
            best.offer(v, arm, p);
        }
        best.get().expect("active set is nonempty")
    }
}

impl Agent for EliminationAgent {
    fn kind(&self) -> AgentKind {
        self.kind
    }

    fn select(&mut self) -> Selection {
        let t = self.step + 1;
        let (arm, prior) = match self.rule {
            Rule::Thompson => self.select_thompson(),
            Rule::Ucb => self.select_ucb(t),
        };
        self.pending = Some((arm, prior));
        Selection { arm, prior: Some(prior) }
    }

    fn observe(&mut self, reward: f64) -> Result<(), AgentError> {
        let (arm, p) = self.pending.take().ok_or(AgentError::NoPendingSelection)?;
        self.step += 1;
        let t = self.step;
        let post = &self.bank[p];
        let eta = reward - post.mean()[arm];
        let weighted_sd = self.schedule.beta(t).sqrt() * post.std_at(arm);
        self.state.record(t, p, eta, weighted_sd, self.schedule.xi(t));
        for b in &mut self.bank {
            b.condition(arm, reward)?;
        }
        if self.state.active_count() == 0 {
            return Err(AgentError::AllEliminated { step: t });
        }
        Ok(())
    }

    fn active_count(&self) -> Option<usize> {
        Some(self.state.active_count())
    }

    fn is_active(&self, prior: usize) -> bool {
        self.state.is_active(prior)
    }

    fn posterior(&self, prior: usize) -> Option<&PosteriorState> {
        self.bank.get(prior)
    }
}

