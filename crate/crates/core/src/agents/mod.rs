//! Bandit policies over a bank of per-prior posteriors.
//!
//! Every agent follows the same two-phase protocol: [`Agent::select`] picks
//! the next arm (and the prior it was chosen under), then [`Agent::observe`]
//! feeds back the noisy reward for that arm.

mod elimination;
mod fixed;
mod hyper;
mod schedule;

pub use elimination::{EliminationAgent, EliminationState};
pub use fixed::FixedPriorAgent;
pub use hyper::{HyperAgent, HyperposteriorState};
pub use schedule::ConfidenceSchedule;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{GpError, MaterializedPrior, PosteriorState};
use crate::priors::Hyperprior;
use crate::rng::StreamRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("every prior was eliminated at step {step}")]
    AllEliminated { step: usize },
    #[error("{0} needs the true prior")]
    MissingTruePrior(AgentKind),
    #[error("observe called without a pending selection")]
    NoPendingSelection,
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("unknown agent `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    PeGpTs,
    PeGpUcb,
    HpGpTs,
    MapGpTs,
    OracleGpTs,
    OracleGpUcb,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::PeGpTs,
        AgentKind::PeGpUcb,
        AgentKind::HpGpTs,
        AgentKind::MapGpTs,
        AgentKind::OracleGpTs,
        AgentKind::OracleGpUcb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::PeGpTs => "pe-gp-ts",
            AgentKind::PeGpUcb => "pe-gp-ucb",
            AgentKind::HpGpTs => "hp-gp-ts",
            AgentKind::MapGpTs => "map-gp-ts",
            AgentKind::OracleGpTs => "oracle-gp-ts",
            AgentKind::OracleGpUcb => "oracle-gp-ucb",
        }
    }

    /// Fixed random-stream index, independent of the roster order.
    pub fn stream_index(self) -> u64 {
        match self {
            AgentKind::PeGpTs => 0,
            AgentKind::PeGpUcb => 1,
            AgentKind::HpGpTs => 2,
            AgentKind::MapGpTs => 3,
            AgentKind::OracleGpTs => 4,
            AgentKind::OracleGpUcb => 5,
        }
    }

    pub fn is_oracle(self) -> bool {
        matches!(self, AgentKind::OracleGpTs | AgentKind::OracleGpUcb)
    }

    pub fn is_elimination(self) -> bool {
        matches!(self, AgentKind::PeGpTs | AgentKind::PeGpUcb)
    }

    pub fn is_hyperposterior(self) -> bool {
        matches!(self, AgentKind::HpGpTs | AgentKind::MapGpTs)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| AgentError::Unknown(s.to_string()))
    }
}

/// What an agent chose at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub arm: usize,
    /// Prior the arm was chosen under; `None` for single-prior agents.
    pub prior: Option<usize>,
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;

    fn select(&mut self) -> Selection;

    /// Reward for the arm returned by the last `select`.
    fn observe(&mut self, reward: f64) -> Result<(), AgentError>;

    /// Size of the active prior set, for elimination agents.
    fn active_count(&self) -> Option<usize> {
        None
    }

    /// Entropy of the hyperposterior, for hyperposterior agents.
    fn entropy(&self) -> Option<f64> {
        None
    }

    fn is_active(&self, _prior: usize) -> bool {
        true
    }

    /// Current posterior under `prior`, if the agent tracks it.
    fn posterior(&self, prior: usize) -> Option<&PosteriorState>;
}

/// Shared parameters for building agents.
#[derive(Debug, Clone, Copy)]
pub struct AgentParams {
    pub delta: f64,
    pub noise_var: f64,
}

pub fn build_agent(
    kind: AgentKind,
    hyperprior: &Hyperprior,
    true_prior: Option<usize>,
    params: AgentParams,
    rng: StreamRng,
) -> Result<Box<dyn Agent>, AgentError> {
    Ok(match kind {
        AgentKind::PeGpTs | AgentKind::PeGpUcb => {
            Box::new(EliminationAgent::new(kind, hyperprior, params, rng)?)
        }
        AgentKind::HpGpTs | AgentKind::MapGpTs => Box::new(HyperAgent::new(kind, hyperprior, params, rng)?),
        AgentKind::OracleGpTs | AgentKind::OracleGpUcb => {
            let p = true_prior.ok_or(AgentError::MissingTruePrior(kind))?;
            Box::new(FixedPriorAgent::new(kind, Arc::clone(hyperprior.prior(p)), p, params, rng)?)
        }
    })
}

pub(crate) fn posterior_bank(priors: &[Arc<MaterializedPrior>], noise_var: f64) -> Result<Vec<PosteriorState>, GpError> {
    priors.iter().map(|p| PosteriorState::new(Arc::clone(p), noise_var)).collect()
}

/// Index and value of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Largest `μ + √β σ` over arms.
pub fn ucb_argmax(state: &PosteriorState, sqrt_beta: f64) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, (&m, &v)) in state.mean().iter().zip(state.variance()).enumerate() {
        let u = m + sqrt_beta * v.sqrt();
        if u > best.1 {
            best = (i, u);
        }
    }
    best
}

/// Running joint argmax over `(arm, prior)`: higher value wins, then lower
/// arm index, then lower prior index.
#[derive(Debug, Clone, Copy)]
pub(crate) struct JointArgmax {
    best: Option<(f64, usize, usize)>,
}

impl JointArgmax {
    pub fn new() -> Self {
        JointArgmax { best: None }
    }

    pub fn offer(&mut self, value: f64, arm: usize, prior: usize) {
        let better = match self.best {
            None => true,
            Some((v, a, p)) => value > v || (value == v && (arm < a || (arm == a && prior < p))),
        };
        if better {
            self.best = Some((value, arm, prior));
        }
    }

    pub fn get(&self) -> Option<(usize, usize)> {
        self.best.map(|(_, a, p)| (a, p))
    }
}
