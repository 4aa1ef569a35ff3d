//! Prior sets and hyperpriors.

mod empirical;

pub use empirical::{empirical_prior_set, log_rain_transform, BucketRecord, BucketedDataset, DEFAULT_RIDGE, RIDGE_FLOOR};

use std::collections::HashSet;
use std::sync::Arc;

use thiserror::Error;

use crate::gp::{GpError, MaterializedPrior};
use crate::kernels::{ArmSet, KernelError, KernelKind, KernelSpec};

#[derive(Debug, Error)]
pub enum PriorError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("hyperprior needs at least one prior")]
    Empty,
    #[error("weights must be nonnegative and sum to one (sum = {0})")]
    BadWeights(f64),
    #[error("{priors} priors but {weights} weights")]
    WeightCount { priors: usize, weights: usize },
    #[error("duplicate prior id `{0}`")]
    DuplicateId(String),
    #[error("priors disagree on the number of arms")]
    ArmCountMismatch,
    #[error("invalid lengthscale list: {0}")]
    BadLengthscales(String),
    #[error("subspace setup supports between 5 and {max} priors, got {got}")]
    SubspaceCount { got: usize, max: usize },
    #[error("bucket `{0}` has fewer than two samples")]
    TooFewSamples(String),
    #[error("inconsistent arm coverage: {0}")]
    Coverage(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A finite prior set with its hyperprior weights `P₁`.
#[derive(Debug, Clone)]
pub struct Hyperprior {
    priors: Vec<Arc<MaterializedPrior>>,
    weights: Vec<f64>,
}

impl Hyperprior {
    pub fn new(priors: Vec<Arc<MaterializedPrior>>, weights: Vec<f64>) -> Result<Self, PriorError> {
        if priors.is_empty() {
            return Err(PriorError::Empty);
        }
        if priors.len() != weights.len() {
            return Err(PriorError::WeightCount { priors: priors.len(), weights: weights.len() });
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(PriorError::BadWeights(sum));
        }
        let mut seen = HashSet::new();
        for p in &priors {
            if !seen.insert(p.id()) {
                return Err(PriorError::DuplicateId(p.id().to_string()));
            }
        }
        let n = priors[0].num_arms();
        if priors.iter().any(|p| p.num_arms() != n) {
            return Err(PriorError::ArmCountMismatch);
        }
        Ok(Hyperprior { priors, weights })
    }

    pub fn uniform(priors: Vec<Arc<MaterializedPrior>>) -> Result<Self, PriorError> {
        let k = priors.len().max(1);
        Self::new(priors, vec![1.0 / k as f64; k])
    }

    pub fn priors(&self) -> &[Arc<MaterializedPrior>] {
        &self.priors
    }

    pub fn prior(&self, i: usize) -> &Arc<MaterializedPrior> {
        &self.priors[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }

    pub fn num_arms(&self) -> usize {
        self.priors[0].num_arms()
    }

    /// Largest prior variance over all priors and arms.
    pub fn max_variance(&self) -> f64 {
        self.priors.iter().map(|p| p.max_variance()).fold(0.0, f64::max)
    }

    pub fn ids(&self) -> Vec<String> {
        self.priors.iter().map(|p| p.id().to_string()).collect()
    }
}

/// Which synthetic prior family to build.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticSetup {
    /// One zero-mean prior per kernel.
    Kernel(Vec<KernelSpec>),
    /// Zero-mean RBF priors with the given lengthscales.
    Lengthscale(Vec<f64>),
    /// RBF priors that each look at a window of four coordinates.
    Subspace { num_priors: usize, lengthscale: f64 },
}

/// The six kernels of the kernel-selection setup, all with lengthscale 1.
pub fn kernel_setup_specs() -> Vec<KernelSpec> {
    [
        KernelKind::Rbf,
        KernelKind::RationalQuadratic { alpha: 0.5 },
        KernelKind::Matern52,
        KernelKind::Matern32,
        KernelKind::Periodic { period: 5.0 },
        KernelKind::Linear { variance: 0.05 * 0.05 },
    ]
    .into_iter()
    .map(|kind| KernelSpec::new(kind, 1.0).expect("constant kernel parameters are valid"))
    .collect()
}

pub const LENGTHSCALE_SETUP: [f64; 4] = [4.0, 2.0, 1.0, 0.5];

/// `count` lengthscales equidistant on `[0.5, 4]`, largest first.
pub fn lengthscale_grid(count: usize) -> Result<Vec<f64>, PriorError> {
    match count {
        0 => Err(PriorError::BadLengthscales("empty grid".into())),
        1 => Ok(vec![4.0]),
        _ => Ok((0..count).map(|i| 4.0 - 3.5 * i as f64 / (count - 1) as f64).collect()),
    }
}

pub const SUBSPACE_WINDOW: usize = 4;
pub const SUBSPACE_DIM: usize = 16;

/// Active coordinate windows for the subspace setup (zero-based).
///
/// Prior `i` looks at `[i, i+1, i+2, i+3]` wrapped around a cycle of length
/// `num_priors`. For five priors this is the base setup where every pair shares
/// exactly three coordinates; longer cycles keep the "at most three shared"
/// property because consecutive windows differ by one coordinate.
pub fn subspace_windows(num_priors: usize, dim: usize) -> Result<Vec<Vec<usize>>, PriorError> {
    if num_priors < 5 || num_priors > dim {
        return Err(PriorError::SubspaceCount { got: num_priors, max: dim });
    }
    let mut windows: Vec<Vec<usize>> = Vec::with_capacity(num_priors);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    for i in 0..num_priors {
        let w: Vec<usize> = (0..SUBSPACE_WINDOW).map(|k| (i + k) % num_priors).collect();
        let mut key = w.clone();
        key.sort_unstable();
        if seen.insert(key) {
            windows.push(w);
        }
    }
    if windows.len() != num_priors {
        return Err(PriorError::SubspaceCount { got: num_priors, max: dim });
    }
    Ok(windows)
}

fn kernel_label(spec: &KernelSpec) -> String {
    match spec.kind {
        KernelKind::Rbf => "rbf".into(),
        KernelKind::RationalQuadratic { .. } => "rq".into(),
        KernelKind::Matern32 => "matern32".into(),
        KernelKind::Matern52 => "matern52".into(),
        KernelKind::Periodic { .. } => "periodic".into(),
        KernelKind::Linear { .. } => "linear".into(),
    }
}

/// Builds a synthetic prior set over `arms` with uniform hyperprior weights.
pub fn build_synthetic_prior_set(setup: &SyntheticSetup, arms: &ArmSet) -> Result<Hyperprior, PriorError> {
    let priors = match setup {
        SyntheticSetup::Kernel(specs) => {
            let mut out = Vec::with_capacity(specs.len());
            for spec in specs {
                let mut id = kernel_label(spec);
                if out.iter().any(|p: &Arc<MaterializedPrior>| p.id() == id) {
                    id = spec.to_string();
                }
                out.push(Arc::new(MaterializedPrior::from_kernel(id, spec, arms)?));
            }
            out
        }
        SyntheticSetup::Lengthscale(ls) => {
            if ls.is_empty() || ls.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                return Err(PriorError::BadLengthscales(format!("{ls:?}")));
            }
            let mut out = Vec::with_capacity(ls.len());
            for &l in ls {
                let spec = KernelSpec::rbf(l)?;
                out.push(Arc::new(MaterializedPrior::from_kernel(format!("rbf-l{l}"), &spec, arms)?));
            }
            out
        }
        SyntheticSetup::Subspace { num_priors, lengthscale } => {
            let windows = subspace_windows(*num_priors, arms.dim())?;
            let mut out = Vec::with_capacity(windows.len());
            for w in windows {
                let spec = KernelSpec::with_active_dims(KernelKind::Rbf, *lengthscale, w.clone())?;
                let label: Vec<String> = w.iter().map(|d| d.to_string()).collect();
                out.push(Arc::new(MaterializedPrior::from_kernel(
                    format!("dims-{}", label.join("-")),
                    &spec,
                    arms,
                )?));
            }
            out
        }
    };
    Hyperprior::uniform(priors)
}
