//! Experiment setups and the multi-seed runner.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{draw_noise, run_episode, sample_environment, Environment, EpisodeRecord};
use crate::agents::{build_agent, AgentError, AgentKind, AgentParams};
use crate::kernels::{ArmSet, KernelSpec};
use crate::priors::{
    build_synthetic_prior_set, empirical_prior_set, kernel_setup_specs, lengthscale_grid, BucketedDataset,
    Hyperprior, PriorError, SyntheticSetup, DEFAULT_RIDGE, LENGTHSCALE_SETUP, SUBSPACE_DIM,
};
use crate::rng::{SeedRoot, Stream};

pub const SUBSPACE_LENGTHSCALE: f64 = 8.0;
const DOMAIN: (f64, f64) = (0.0, 20.0);

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("unknown setup `{0}`")]
    UnknownSetup(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setup {
    Kernel,
    Lengthscale,
    Subspace,
    LengthscaleScaling,
    SubspaceScaling,
    BucketedData,
}

impl Setup {
    pub const ALL: [Setup; 6] = [
        Setup::Kernel,
        Setup::Lengthscale,
        Setup::Subspace,
        Setup::LengthscaleScaling,
        Setup::SubspaceScaling,
        Setup::BucketedData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Setup::Kernel => "kernel",
            Setup::Lengthscale => "lengthscale",
            Setup::Subspace => "subspace",
            Setup::LengthscaleScaling => "lengthscale-scaling",
            Setup::SubspaceScaling => "subspace-scaling",
            Setup::BucketedData => "bucketed-data",
        }
    }

    fn default_num_priors(self) -> Option<usize> {
        match self {
            Setup::Kernel | Setup::Lengthscale | Setup::BucketedData => None,
            Setup::Subspace | Setup::SubspaceScaling => Some(5),
            Setup::LengthscaleScaling => Some(8),
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setup {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Setup::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| ExperimentError::UnknownSetup(s.to_string()))
    }
}

/// CSV inputs for the bucketed-data setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketedSource {
    pub prior_csv: PathBuf,
    pub test_csv: PathBuf,
    pub log_transform: bool,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setup: Setup,
    pub horizon: usize,
    pub num_arms: usize,
    /// Prior-set size for the setups that take one.
    pub num_priors: Option<usize>,
    pub delta: f64,
    pub noise_var: f64,
    pub seeds: usize,
    pub seed_base: u64,
    /// Worker threads; 0 means all available cores.
    pub workers: usize,
    pub agents: Vec<AgentKind>,
    /// Replaces the kernel list of the kernel setup.
    pub kernels: Option<Vec<KernelSpec>>,
    /// Replaces the lengthscale list of the lengthscale setups.
    pub lengthscales: Option<Vec<f64>>,
    pub bucketed: Option<BucketedSource>,
}

impl ExperimentConfig {
    pub fn new(setup: Setup) -> Self {
        ExperimentConfig {
            setup,
            horizon: 500,
            num_arms: 500,
            num_priors: setup.default_num_priors(),
            delta: 0.05,
            noise_var: 0.0625,
            seeds: 100,
            seed_base: 0,
            workers: 0,
            agents: AgentKind::ALL.to_vec(),
            kernels: None,
            lengthscales: None,
            bucketed: None,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Invalid(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.num_arms == 0 && self.setup != Setup::BucketedData {
            return bad("need at least one arm");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return bad("noise variance must be positive");
        }
        if self.seeds == 0 {
            return bad("need at least one seed");
        }
        if self.agents.is_empty() {
            return bad("agent roster is empty");
        }
        let mut seen = self.agents.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.agents.len() {
            return bad("agent roster lists an agent twice");
        }
        match self.setup {
            Setup::Kernel | Setup::Lengthscale | Setup::BucketedData if self.num_priors.is_some() => {
                bad("this setup takes its prior count from its prior list")
            }
            Setup::LengthscaleScaling if self.lengthscales.is_some() => {
                bad("lengthscale-scaling builds its own lengthscale grid")
            }
            Setup::LengthscaleScaling | Setup::Subspace | Setup::SubspaceScaling if self.num_priors.is_none() => {
                bad("this setup needs a prior count")
            }
            Setup::BucketedData if self.bucketed.is_none() => bad("bucketed-data needs prior and test CSV files"),
            _ => Ok(()),
        }
    }

    pub fn kernel_specs(&self) -> Vec<KernelSpec> {
        self.kernels.clone().unwrap_or_else(kernel_setup_specs)
    }

    fn lengthscale_list(&self) -> Result<Vec<f64>, ExperimentError> {
        if let Some(ls) = &self.lengthscales {
            return Ok(ls.clone());
        }
        Ok(match self.setup {
            Setup::LengthscaleScaling => lengthscale_grid(self.num_priors.unwrap_or(8))?,
            _ => LENGTHSCALE_SETUP.to_vec(),
        })
    }

    pub fn params(&self) -> AgentParams {
        AgentParams { delta: self.delta, noise_var: self.noise_var }
    }
}

/// Everything shared across seeds.
enum Prepared {
    Fixed(Arc<Hyperprior>),
    /// Arms are redrawn per seed, so the prior set is too.
    Subspace { num_priors: usize },
    Bucketed { hyperprior: Arc<Hyperprior>, tests: Vec<(Vec<f64>, Option<usize>)> },
}

pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub prior_ids: Vec<String>,
    pub num_arms: usize,
    /// The prior set, when every seed shares it.
    pub hyperprior: Option<Arc<Hyperprior>>,
    /// Largest prior variance `σ₀²`.
    pub sigma0_sq: f64,
    /// `sup_x |μ_{1,p}(x)|` per prior.
    pub prior_max_abs_mean: Vec<f64>,
    /// Ordered by seed, then by roster position.
    pub records: Vec<EpisodeRecord>,
}

impl ExperimentResult {
    pub fn aborted(&self) -> usize {
        self.records.iter().filter(|r| r.aborted).count()
    }
}

fn subspace_arms(root: &SeedRoot, n: usize) -> ArmSet {
    let mut rng = root.stream(Stream::Arms);
    let points = (0..n)
        .map(|_| (0..SUBSPACE_DIM).map(|_| rng.random_range(DOMAIN.0..DOMAIN.1)).collect())
        .collect();
    ArmSet::new(points).expect("all points share one dimension")
}

fn prepare(config: &ExperimentConfig) -> Result<(Prepared, Vec<String>, usize), ExperimentError> {
    let line = || ArmSet::equispaced(config.num_arms, DOMAIN.0, DOMAIN.1);
    let fixed = |h: Hyperprior| {
        let ids = h.ids();
        let n = h.num_arms();
        (Prepared::Fixed(Arc::new(h)), ids, n)
    };
    Ok(match config.setup {
        Setup::Kernel => fixed(build_synthetic_prior_set(&SyntheticSetup::Kernel(config.kernel_specs()), &line())?),
        Setup::Lengthscale | Setup::LengthscaleScaling => fixed(build_synthetic_prior_set(
            &SyntheticSetup::Lengthscale(config.lengthscale_list()?),
            &line(),
        )?),
        Setup::Subspace | Setup::SubspaceScaling => {
            let num_priors = config.num_priors.expect("validated");
            // Build once on placeholder arms to validate and collect ids.
            let probe = ArmSet::new(vec![vec![0.0; SUBSPACE_DIM]]).expect("one point");
            let h = build_synthetic_prior_set(
                &SyntheticSetup::Subspace { num_priors, lengthscale: SUBSPACE_LENGTHSCALE },
                &probe,
            )?;
            (Prepared::Subspace { num_priors }, h.ids(), config.num_arms)
        }
        Setup::BucketedData => {
            let src = config.bucketed.as_ref().expect("validated");
            let prior_data = BucketedDataset::from_path(&src.prior_csv, src.log_transform)?;
            let test_data = BucketedDataset::from_path(&src.test_csv, src.log_transform)?;
            if test_data.num_arms() != prior_data.num_arms() {
                return Err(ExperimentError::Invalid(format!(
                    "prior data has {} arms but test data has {}",
                    prior_data.num_arms(),
                    test_data.num_arms()
                )));
            }
            let ridge = if src.ridge > 0.0 { src.ridge } else { DEFAULT_RIDGE };
            let h = empirical_prior_set(&prior_data, ridge)?;
            let ids = h.ids();
            let mut tests = Vec::new();
            for (b, label) in test_data.bucket_labels().into_iter().enumerate() {
                let known = ids.iter().position(|id| id == label);
                for s in test_data.samples(b) {
                    tests.push((s.clone(), known));
                }
            }
            if config.agents.iter().any(|a| a.is_oracle()) {
                if let Some((_, None)) = tests.iter().find(|(_, k)| k.is_none()) {
                    return Err(ExperimentError::Invalid(
                        "oracle agents need every test bucket to match a prior bucket".into(),
                    ));
                }
            }
            let n = h.num_arms();
            (Prepared::Bucketed { hyperprior: Arc::new(h), tests }, ids, n)
        }
    })
}

fn experiment_name(config: &ExperimentConfig) -> &'static str {
    config.setup.name()
}

fn environment_for_seed(
    prepared: &Prepared,
    config: &ExperimentConfig,
    root: &SeedRoot,
) -> Result<Environment, ExperimentError> {
    let mut rng = root.stream(Stream::Environment);
    Ok(match prepared {
        Prepared::Fixed(h) => sample_environment(Arc::clone(h), config.noise_var, &mut rng),
        Prepared::Subspace { num_priors } => {
            let arms = subspace_arms(root, config.num_arms);
            let h = build_synthetic_prior_set(
                &SyntheticSetup::Subspace { num_priors: *num_priors, lengthscale: SUBSPACE_LENGTHSCALE },
                &arms,
            )?;
            sample_environment(Arc::new(h), config.noise_var, &mut rng)
        }
        Prepared::Bucketed { hyperprior, tests } => {
            let (f, known) = &tests[rng.random_range(0..tests.len())];
            Environment::from_function(Arc::clone(hyperprior), *known, f.clone(), config.noise_var)
        }
    })
}

fn seed_records(
    prepared: &Prepared,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<EpisodeRecord>, ExperimentError> {
    let name = experiment_name(config);
    let root = SeedRoot::new(name, seed);
    let env = environment_for_seed(prepared, config, &root)?;
    let noise = draw_noise(&mut root.stream(Stream::Noise), config.horizon, config.noise_var);
    let mut out = Vec::with_capacity(config.agents.len());
    for &kind in &config.agents {
        let rng = root.stream(Stream::Agent(kind.stream_index()));
        let mut agent = build_agent(kind, &env.hyperprior, env.true_prior, config.params(), rng)?;
        out.push(run_episode(&env, agent.as_mut(), &noise, seed, name)?);
    }
    Ok(out)
}

/// The prior set seen by `seed`.
pub fn prior_set(config: &ExperimentConfig, seed: u64) -> Result<Arc<Hyperprior>, ExperimentError> {
    config.validate()?;
    let (prepared, _, _) = prepare(config)?;
    Ok(match prepared {
        Prepared::Fixed(h) | Prepared::Bucketed { hyperprior: h, .. } => h,
        Prepared::Subspace { num_priors } => {
            let root = SeedRoot::new(experiment_name(config), seed);
            Arc::new(build_synthetic_prior_set(
                &SyntheticSetup::Subspace { num_priors, lengthscale: SUBSPACE_LENGTHSCALE },
                &subspace_arms(&root, config.num_arms),
            )?)
        }
    })
}

/// Runs the roster on a single seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<EpisodeRecord>, ExperimentError> {
    config.validate()?;
    let (prepared, _, _) = prepare(config)?;
    seed_records(&prepared, config, seed)
}

/// Runs every seed of the experiment, in parallel across seeds.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;
    let (prepared, prior_ids, num_arms) = prepare(config)?;
    let seeds: Vec<u64> = (0..config.seeds as u64).map(|i| config.seed_base + i).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let per_seed: Vec<Vec<EpisodeRecord>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| seed_records(&prepared, config, s))
            .collect::<Result<_, _>>()
    })?;
    let (hyperprior, sigma0_sq, prior_max_abs_mean) = match &prepared {
        Prepared::Fixed(h) | Prepared::Bucketed { hyperprior: h, .. } => (
            Some(Arc::clone(h)),
            h.max_variance(),
            h.priors().iter().map(|p| p.mean().iter().fold(0.0, |m: f64, v| m.max(v.abs()))).collect(),
        ),
        // Zero-mean unit-variance RBF priors.
        Prepared::Subspace { num_priors } => (None, 1.0, vec![0.0; *num_priors]),
    };
    Ok(ExperimentResult {
        config: config.clone(),
        prior_ids,
        num_arms,
        hyperprior,
        sigma0_sq,
        prior_max_abs_mean,
        records: per_seed.into_iter().flatten().collect(),
    })
}
