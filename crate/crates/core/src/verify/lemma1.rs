//! Empirical coverage of the joint confidence event.
//!
//! For every step, arm and prior the checks are
//! `|f(x) − μ_{t,p*}(x)| ≤ √β_t σ_{t,p*}(x)` and
//! `|f̃_{t,p}(x) − μ_{t,p}(x)| ≤ √β_t σ_{t,p}(x)` for a fresh posterior draw
//! `f̃_{t,p}`, with the coverage `β_t` (no factor 2 inside the log).

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::VerifyError;
use crate::agents::{Agent, AgentKind, AgentParams, ConfidenceSchedule, EliminationAgent};
use crate::environment::{draw_noise, sample_environment};
use crate::kernels::ArmSet;
use crate::priors::{build_synthetic_prior_set, kernel_setup_specs, SyntheticSetup};
use crate::rng::{SeedRoot, Stream};

/// Stream id for the check's own posterior draws, away from agent streams.
const CHECK_STREAM: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Params {
    pub num_arms: usize,
    pub horizon: usize,
    pub episodes: usize,
    pub delta: f64,
    pub noise_var: f64,
    pub seed_base: u64,
}

impl Default for Lemma1Params {
    fn default() -> Self {
        Lemma1Params { num_arms: 50, horizon: 50, episodes: 500, delta: 0.05, noise_var: 0.0625, seed_base: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub episodes: usize,
    pub posterior_violations: usize,
    pub sample_violations: usize,
    pub joint_violations: usize,
    pub frequency: f64,
    pub threshold: f64,
    pub passed: bool,
}

fn covered(values: &[f64], mean: &[f64], var: &[f64], sqrt_beta: f64) -> bool {
    values.iter().zip(mean).zip(var).all(|((v, m), s2)| (v - m).abs() <= sqrt_beta * s2.sqrt())
}

/// Binomial allowance `δ + 2 √(δ(1−δ)/m)`.
pub fn violation_threshold(delta: f64, episodes: usize) -> f64 {
    delta + 2.0 * (delta * (1.0 - delta) / episodes as f64).sqrt()
}

pub fn run(params: &Lemma1Params) -> Result<Lemma1Report, VerifyError> {
    let arms = ArmSet::equispaced(params.num_arms, 0.0, 20.0);
    let hyper = Arc::new(build_synthetic_prior_set(&SyntheticSetup::Kernel(kernel_setup_specs()), &arms)?);
    let schedule = ConfidenceSchedule::new(params.delta, params.num_arms, hyper.len(), params.noise_var)?;
    let agent_params = AgentParams { delta: params.delta, noise_var: params.noise_var };

    let outcomes: Vec<(bool, bool)> = (0..params.episodes as u64)
        .into_par_iter()
        .map(|i| -> Result<(bool, bool), VerifyError> {
            let seed = params.seed_base + i;
            let root = SeedRoot::new("lemma1", seed);
            let env = sample_environment(Arc::clone(&hyper), params.noise_var, &mut root.stream(Stream::Environment));
            let star = env.true_prior.expect("synthetic environment");
            let noise = draw_noise(&mut root.stream(Stream::Noise), params.horizon, params.noise_var);
            let mut agent = EliminationAgent::new(
                AgentKind::PeGpTs,
                &hyper,
                agent_params,
                root.stream(Stream::Agent(AgentKind::PeGpTs.stream_index())),
            )?;
            let mut check_rng = root.stream(Stream::Agent(CHECK_STREAM));
            let mut draw = vec![0.0; params.num_arms];
            let mut scratch = Vec::new();
            let (mut post_bad, mut sample_bad) = (false, false);
            for (step, &eps) in noise.iter().enumerate() {
                let sqrt_beta = schedule.coverage_beta(step + 1).sqrt();
                let truth = agent.posterior(star).expect("all priors tracked");
                post_bad |= !covered(&env.f, truth.mean(), truth.variance(), sqrt_beta);
                for p in 0..hyper.len() {
                    let post = agent.posterior(p).expect("all priors tracked");
                    post.sample_into(&mut check_rng, &mut draw, &mut scratch);
                    sample_bad |= !covered(&draw, post.mean(), post.variance(), sqrt_beta);
                }
                let sel = agent.select();
                if agent.observe(env.f[sel.arm] + eps).is_err() {
                    break;
                }
            }
            Ok((post_bad, sample_bad))
        })
        .collect::<Result<_, _>>()?;

    let posterior_violations = outcomes.iter().filter(|o| o.0).count();
    let sample_violations = outcomes.iter().filter(|o| o.1).count();
    let joint_violations = outcomes.iter().filter(|o| o.0 || o.1).count();
    let frequency = joint_violations as f64 / params.episodes as f64;
    let threshold = violation_threshold(params.delta, params.episodes);
    Ok(Lemma1Report {
        episodes: params.episodes,
        posterior_violations,
        sample_violations,
        joint_violations,
        frequency,
        threshold,
        passed: frequency <= threshold,
    })
}
