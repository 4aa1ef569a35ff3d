//! Numerical checks of the high-probability statements behind the agents.

pub mod gp_oracle;
pub mod lemma1;
pub mod lemma3;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, AgentKind};
use crate::environment::{run_experiment, ExperimentConfig, ExperimentError, ExperimentResult, Setup};
use crate::gp::GpError;
use crate::kernels::KernelError;
use crate::metrics::{summarize, MetricsError, Theorem4Check};
use crate::priors::PriorError;

pub use lemma1::violation_threshold;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("both priors must share one kernel")]
    KernelMismatch,
    #[error("observation covariance is singular")]
    Singular,
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("the {0} setup cannot be used here")]
    UnsupportedSetup(Setup),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Lemma1,
    Lemma3,
    Theorem4,
    GpOracle,
    EliminationSafety,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Lemma1, Suite::Lemma3, Suite::Theorem4, Suite::GpOracle, Suite::EliminationSafety];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Lemma3 => "lemma3",
            Suite::Theorem4 => "theorem4",
            Suite::GpOracle => "gp-oracle",
            Suite::EliminationSafety => "elimination-safety",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| VerifyError::UnknownSuite(s.to_string()))
    }
}

/// Knobs shared by the suites; `None` keeps each suite's own default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seeds: Option<usize>,
    pub seed_base: u64,
    pub setup: Option<Setup>,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub passed: bool,
    pub report: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationRow {
    pub agent: AgentKind,
    pub episodes: usize,
    pub aborted: usize,
    pub eliminated: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationSafetyReport {
    pub rows: Vec<EliminationRow>,
    pub threshold: f64,
    pub passed: bool,
}

/// Fraction of episodes in which an elimination agent dropped the true prior.
pub fn elimination_safety(result: &ExperimentResult) -> EliminationSafetyReport {
    let delta = result.config.delta;
    let mut rows = Vec::new();
    for agent in [AgentKind::PeGpTs, AgentKind::PeGpUcb] {
        let eps: Vec<_> = result.records.iter().filter(|r| r.agent == agent).collect();
        if eps.is_empty() {
            continue;
        }
        let eliminated = eps.iter().filter(|r| r.true_prior_eliminated).count();
        rows.push(EliminationRow {
            agent,
            episodes: eps.len(),
            aborted: eps.iter().filter(|r| r.aborted).count(),
            eliminated,
            frequency: eliminated as f64 / eps.len() as f64,
        });
    }
    let episodes = rows.iter().map(|r| r.episodes).min().unwrap_or(0).max(1);
    let threshold = violation_threshold(delta, episodes);
    let passed = !rows.is_empty() && rows.iter().all(|r| r.frequency <= threshold);
    EliminationSafetyReport { rows, threshold, passed }
}

pub fn elimination_safety_config(seeds: usize, seed_base: u64, workers: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Setup::Kernel);
    cfg.agents = vec![AgentKind::PeGpTs, AgentKind::PeGpUcb];
    cfg.seeds = seeds;
    cfg.seed_base = seed_base;
    cfg.workers = workers;
    cfg
}

/// HP-GP-TS mean regret plus three standard errors against the
/// information-theoretic bound at every step.
pub fn theorem4(result: &ExperimentResult) -> Result<Theorem4Check, VerifyError> {
    let summaries = summarize(&result.records, result.prior_ids.len())?;
    let hp = summaries
        .iter()
        .find(|s| s.agent == AgentKind::HpGpTs)
        .ok_or(AgentError::Unknown("hp-gp-ts missing from roster".into()))?;
    Ok(Theorem4Check::evaluate(hp, result.num_arms, result.sigma0_sq, result.config.noise_var))
}

pub fn theorem4_config(setup: Setup, seeds: usize, seed_base: u64, workers: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(setup);
    cfg.agents = vec![AgentKind::HpGpTs];
    cfg.seeds = seeds;
    cfg.seed_base = seed_base;
    cfg.workers = workers;
    cfg
}

fn outcome<T: Serialize>(suite: Suite, passed: bool, report: &T) -> SuiteOutcome {
    SuiteOutcome { suite, passed, report: serde_json::to_value(report).expect("reports serialize") }
}

/// Runs one suite at its default scale, adjusted by `options`.
pub fn run_suite(suite: Suite, options: &VerifyOptions) -> Result<SuiteOutcome, VerifyError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    pool.install(|| match suite {
        Suite::GpOracle => {
            let params = gp_oracle::GpOracleParams { seed: options.seed_base, ..Default::default() };
            let r = gp_oracle::run(&params)?;
            Ok(outcome(suite, r.passed, &r))
        }
        Suite::Lemma1 => {
            let mut params = lemma1::Lemma1Params { seed_base: options.seed_base, ..Default::default() };
            if let Some(s) = options.seeds {
                params.episodes = s;
            }
            let r = lemma1::run(&params)?;
            Ok(outcome(suite, r.passed, &r))
        }
        Suite::Lemma3 => {
            let r = lemma3::run(20_000, options.seed_base)?;
            Ok(outcome(suite, r.passed, &r))
        }
        Suite::Theorem4 => {
            let setup = options.setup.unwrap_or(Setup::Kernel);
            if setup == Setup::BucketedData {
                return Err(VerifyError::UnsupportedSetup(setup));
            }
            let cfg = theorem4_config(setup, options.seeds.unwrap_or(100), options.seed_base, options.workers);
            let r = theorem4(&run_experiment(&cfg)?)?;
            Ok(outcome(suite, r.passed, &r))
        }
        Suite::EliminationSafety => {
            let cfg = elimination_safety_config(options.seeds.unwrap_or(500), options.seed_base, options.workers);
            let r = elimination_safety(&run_experiment(&cfg)?);
            Ok(outcome(suite, r.passed, &r))
        }
    })
}
