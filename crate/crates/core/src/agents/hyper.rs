//! Hyperposterior-driven Thompson sampling (HP-GP-TS and MAP-GP-TS).

use rand::Rng;

use super::{argmax, posterior_bank, Agent, AgentError, AgentKind, AgentParams, Selection};
use crate::gp::PosteriorState;
use crate::priors::Hyperprior;
use crate::rng::{sample_categorical, StreamRng};

/// Log-space weights over the prior set, kept normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperposteriorState {
    log_weights: Vec<f64>,
}

impl HyperposteriorState {
    pub fn new(weights: &[f64]) -> Self {
        let mut s = HyperposteriorState { log_weights: weights.iter().map(|w| w.ln()).collect() };
        s.normalize();
        s
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    /// Bayes update with one log-likelihood per prior. An update that gives
    /// every prior zero posterior mass carries no usable information and is
    /// skipped.
    pub fn update(&mut self, loglik: &[f64]) {
        let next: Vec<f64> = self.log_weights.iter().zip(loglik).map(|(l, ll)| l + ll).collect();
        if next.iter().all(|l| *l == f64::NEG_INFINITY || l.is_nan()) {
            return;
        }
        self.log_weights = next;
        self.normalize();
    }

    fn normalize(&mut self) {
        let m = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + self.log_weights.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        for l in &mut self.log_weights {
            *l -= lse;
        }
    }

    /// Highest-weight prior, lowest index on ties.
    pub fn map(&self) -> usize {
        argmax(&self.log_weights).0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(rng, &self.weights())
    }

    /// Entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.log_weights
            .iter()
            .filter(|l| l.is_finite())
            .map(|&l| -l.exp() * l)
            .sum()
    }
}

/// HP-GP-TS samples the prior from the hyperposterior; MAP-GP-TS takes its mode.
pub struct HyperAgent {
    kind: AgentKind,
    bank: Vec<PosteriorState>,
    hyper: HyperposteriorState,
    rng: StreamRng,
    pending: Option<usize>,
    sample: Vec<f64>,
    scratch: Vec<f64>,
    loglik: Vec<f64>,
}

impl HyperAgent {
    pub fn new(kind: AgentKind, hyperprior: &Hyperprior, params: AgentParams, rng: StreamRng) -> Result<Self, AgentError> {
        if !kind.is_hyperposterior() {
            return Err(AgentError::Unknown(kind.to_string()));
        }
        Ok(HyperAgent {
            kind,
            bank: posterior_bank(hyperprior.priors(), params.noise_var)?,
            hyper: HyperposteriorState::new(hyperprior.weights()),
            rng,
            pending: None,
            sample: vec![0.0; hyperprior.num_arms()],
            scratch: Vec::new(),
            loglik: vec![0.0; hyperprior.len()],
        })
    }

    pub fn hyperposterior(&self) -> &HyperposteriorState {
        &self.hyper
    }
}

impl Agent for HyperAgent {
    fn kind(&self) -> AgentKind {
        self.kind
    }

    fn select(&mut self) -> Selection {
        let p = match self.kind {
            AgentKind::HpGpTs => self.hyper.sample(&mut self.rng),
            _ => self.hyper.map(),
        };
        self.bank[p].sample_into(&mut self.rng, &mut self.sample, &mut self.scratch);
        let arm = argmax(&self.sample).0;
        self.pending = Some(arm);
        Selection { arm, prior: Some(p) }
    }

    fn observe(&mut self, reward: f64) -> Result<(), AgentError> {
        let arm = self.pending.take().ok_or(AgentError::NoPendingSelection)?;
        for (ll, b) in self.loglik.iter_mut().zip(&self.bank) {
            *ll = b.predictive_loglik(arm, reward);
        }
        self.hyper.update(&self.loglik);
        for b in &mut self.bank {
            b.condition(arm, reward)?;
        }
        Ok(())
    }

    fn entropy(&self) -> Option<f64> {
        Some(self.hyper.entropy())
    }

    fn posterior(&self, prior: usize) -> Option<&PosteriorState> {
        self.bank.get(prior)
    }
}
