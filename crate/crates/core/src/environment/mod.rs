//! Ground-truth draws and the episode loop.

mod experiment;

pub use experiment::{
    prior_set, run_experiment, run_seed, BucketedSource, ExperimentConfig, ExperimentError, ExperimentResult, Setup,
    SUBSPACE_LENGTHSCALE,
};

use std::sync::Arc;

use rand::Rng;

use crate::agents::{Agent, AgentError, AgentKind};
use crate::priors::Hyperprior;
use crate::rng::{fill_standard_normal, sample_categorical};

/// One realized bandit problem.
#[derive(Debug, Clone)]
pub struct Environment {
    pub hyperprior: Arc<Hyperprior>,
    /// Index of the prior `f` was drawn from, when known.
    pub true_prior: Option<usize>,
    pub f: Vec<f64>,
    pub noise_var: f64,
    pub x_star: usize,
    pub f_star: f64,
}

impl Environment {
    /// Wraps a given reward vector, e.g. a held-out measurement.
    pub fn from_function(hyperprior: Arc<Hyperprior>, true_prior: Option<usize>, f: Vec<f64>, noise_var: f64) -> Self {
        let (x_star, f_star) = crate::agents::argmax(&f);
        Environment { hyperprior, true_prior, f, noise_var, x_star, f_star }
    }

    /// Regret of pulling `arm`.
    pub fn regret(&self, arm: usize) -> f64 {
        self.f_star - self.f[arm]
    }
}

/// Draws `p*` from the hyperprior weights, then `f` from that prior.
pub fn sample_environment<R: Rng + ?Sized>(hyperprior: Arc<Hyperprior>, noise_var: f64, rng: &mut R) -> Environment {
    let p = sample_categorical(rng, hyperprior.weights());
    let f = hyperprior.prior(p).sample(rng);
    Environment::from_function(hyperprior, Some(p), f, noise_var)
}

/// `horizon` noise terms `ε_t ~ N(0, σ²)`.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, horizon: usize, noise_var: f64) -> Vec<f64> {
    let mut eps = vec![0.0; horizon];
    fill_standard_normal(rng, &mut eps);
    let sd = noise_var.sqrt();
    eps.iter_mut().for_each(|e| *e *= sd);
    eps
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub arm: usize,
    pub prior: Option<usize>,
    pub reward: f64,
    pub instant_regret: f64,
    /// `|P_t|` after this step's elimination check.
    pub active_priors: Option<usize>,
    /// Entropy of the hyperposterior the prior was chosen from.
    pub entropy: Option<f64>,
    /// `σ²_{t,p*}(x*)` before this step's observation, when the agent tracks `p*`.
    pub sigma2_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub agent: AgentKind,
    pub setup: String,
    pub true_prior: Option<usize>,
    pub steps: Vec<StepRecord>,
    pub aborted: bool,
    /// For elimination agents: whether `p*` left the active set.
    pub true_prior_eliminated: bool,
}

impl EpisodeRecord {
    pub fn cumulative_regret(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.steps
            .iter()
            .map(|s| {
                acc += s.instant_regret;
                acc
            })
            .collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.steps.iter().map(|s| s.instant_regret).sum()
    }
}

/// Runs one agent for `noise.len()` steps against `env`.
///
/// An agent that eliminates every prior ends the episode early with
/// `aborted` set; any other agent failure is returned as an error.
pub fn run_episode(
    env: &Environment,
    agent: &mut dyn Agent,
    noise: &[f64],
    seed: u64,
    setup: &str,
) -> Result<EpisodeRecord, AgentError> {
    let mut steps = Vec::with_capacity(noise.len());
    let mut aborted = false;
    for &eps in noise {
        let sel = agent.select();
        let entropy = agent.entropy();
        let sigma2_star = env
            .true_prior
            .and_then(|p| agent.posterior(p))
            .map(|post| post.variance()[env.x_star]);
        let reward = env.f[sel.arm] + eps;
        let outcome = agent.observe(reward);
        steps.push(StepRecord {
            arm: sel.arm,
            prior: sel.prior,
            reward,
            instant_regret: env.regret(sel.arm),
            active_priors: agent.active_count(),
            entropy,
            sigma2_star,
        });
        match outcome {
            Ok(()) => {}
            Err(AgentError::AllEliminated { .. }) => {
                aborted = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let kind = agent.kind();
    let true_prior_eliminated = kind.is_elimination() && env.true_prior.is_some_and(|p| !agent.is_active(p));
    Ok(EpisodeRecord {
        seed,
        agent: kind,
        setup: setup.to_string(),
        true_prior: env.true_prior,
        steps,
        aborted,
        true_prior_eliminated,
    })
}
