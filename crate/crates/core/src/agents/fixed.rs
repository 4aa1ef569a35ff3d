//! GP-TS and GP-UCB with a single known prior.

use std::sync::Arc;

use super::{argmax, ucb_argmax, Agent, AgentError, AgentKind, AgentParams, ConfidenceSchedule, Selection};
use crate::gp::{MaterializedPrior, PosteriorState};
use crate::rng::StreamRng;

pub struct FixedPriorAgent {
    kind: AgentKind,
    prior_index: usize,
    state: PosteriorState,
    schedule: ConfidenceSchedule,
    rng: StreamRng,
    pending: Option<usize>,
    sample: Vec<f64>,
    scratch: Vec<f64>,
}

impl FixedPriorAgent {
    /// `kind` must be one of the oracle kinds; `prior_index` is the position of
    /// `prior` in the surrounding prior set, used to answer `posterior` queries.
    pub fn new(
        kind: AgentKind,
        prior: Arc<MaterializedPrior>,
        prior_index: usize,
        params: AgentParams,
        rng: StreamRng,
    ) -> Result<Self, AgentError> {
        if !kind.is_oracle() {
            return Err(AgentError::Unknown(kind.to_string()));
        }
        let n = prior.num_arms();
        Ok(FixedPriorAgent {
            kind,
            prior_index,
            state: PosteriorState::new(prior, params.noise_var)?,
            schedule: ConfidenceSchedule::new(params.delta, n, 1, params.noise_var)?,
            rng,
            pending: None,
            sample: vec![0.0; n],
            scratch: Vec::new(),
        })
    }

    pub fn state(&self) -> &PosteriorState {
        &self.state
    }
}

impl Agent for FixedPriorAgent {
    fn kind(&self) -> AgentKind {
        self.kind
    }

    fn select(&mut self) -> Selection {
        let arm = if self.kind == AgentKind::OracleGpTs {
            self.state.sample_into(&mut self.rng, &mut self.sample, &mut self.scratch);
            argmax(&self.sample).0
        } else {
            let t = self.state.num_observations() + 1;
            ucb_argmax(&self.state, self.schedule.beta(t).sqrt()).0
        };
        self.pending = Some(arm);
        Selection { arm, prior: None }
    }

    fn observe(&mut self, reward: f64) -> Result<(), AgentError> {
        let arm = self.pending.take().ok_or(AgentError::NoPendingSelection)?;
        self.state.condition(arm, reward)?;
        Ok(())
    }

    fn posterior(&self, prior: usize) -> Option<&PosteriorState> {
        (prior == self.prior_index).then_some(&self.state)
    }
}
