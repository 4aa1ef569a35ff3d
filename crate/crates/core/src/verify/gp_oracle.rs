//! Incremental posterior against the dense reference, plus Matheron moments.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::VerifyError;
use crate::gp::{dense, MaterializedPrior, PosteriorState};
use crate::kernels::{ArmSet, KernelKind, KernelSpec};
use crate::rng::{fill_standard_normal, SeedRoot, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpOracleParams {
    pub cases: usize,
    pub tolerance: f64,
    pub moment_instances: usize,
    pub moment_draws: usize,
    pub seed: u64,
}

impl Default for GpOracleParams {
    fn default() -> Self {
        GpOracleParams { cases: 200, tolerance: 1e-8, moment_instances: 20, moment_draws: 20_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpOracleReport {
    pub cases: usize,
    pub equivalent_cases: usize,
    pub max_mean_error: f64,
    pub max_var_error: f64,
    pub monotone_variance: bool,
    pub exchangeable: bool,
    pub max_exchange_error: f64,
    pub moment_instances: usize,
    pub moment_passes: usize,
    /// Largest `|z|` over mean and variance checks.
    pub worst_moment_z: f64,
    pub passed: bool,
}

fn random_spec<R: Rng>(rng: &mut R, dim: usize) -> KernelSpec {
    let kind = match rng.random_range(0..6) {
        0 => KernelKind::Rbf,
        1 => KernelKind::RationalQuadratic { alpha: rng.random_range(0.3..3.0) },
        2 => KernelKind::Matern32,
        3 => KernelKind::Matern52,
        4 => KernelKind::Periodic { period: rng.random_range(1.0..5.0) },
        _ => KernelKind::Linear { variance: 1.0 / (25.0 * dim as f64) },
    };
    KernelSpec::new(kind, rng.random_range(0.3..3.0)).expect("sampled parameters are positive")
}

fn random_prior<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Result<Arc<MaterializedPrior>, VerifyError> {
    let arms = ArmSet::new(
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(0.0..5.0)).collect()).collect(),
    )
    .expect("equal dimensions");
    let spec = random_spec(rng, dim);
    let base = MaterializedPrior::from_kernel(spec.to_string(), &spec, &arms)?;
    // Nonzero mean so the mean path is exercised too.
    let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(Arc::new(MaterializedPrior::new(base.id(), mean, base.cov().clone())?))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn run(params: &GpOracleParams) -> Result<GpOracleReport, VerifyError> {
    let root = SeedRoot::new("gp-oracle", params.seed);
    let mut rng = root.stream(Stream::Environment);
    let mut equivalent = 0;
    let (mut max_mean, mut max_var, mut max_exchange) = (0.0f64, 0.0f64, 0.0f64);
    let mut monotone = true;
    for _ in 0..params.cases {
        let dim = rng.random_range(1..=3);
        let n = rng.random_range(3..=30);
        let prior = random_prior(&mut rng, n, dim)?;
        let noise: f64 = rng.random_range(0.01..0.5);
        let t = rng.random_range(0..=25);
        let f = prior.sample(&mut rng);
        let mut obs = Vec::with_capacity(t);
        for _ in 0..t {
            let arm = rng.random_range(0..n);
            let y = f[arm] + noise.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
            obs.push((arm, y));
        }

        let mut state = PosteriorState::new(Arc::clone(&prior), noise)?;
        for &(arm, y) in &obs {
            let before = state.variance().to_vec();
            state.condition(arm, y)?;
            monotone &= state.variance().iter().zip(&before).all(|(a, b)| *a <= b + 1e-12);
        }
        let idx: Vec<usize> = obs.iter().map(|o| o.0).collect();
        let ys: Vec<f64> = obs.iter().map(|o| o.1).collect();
        let reference = dense::posterior(&prior, noise, &idx, &ys);
        let ref_var: Vec<f64> = reference.cov.diagonal().iter().copied().collect();
        let em = max_abs_diff(state.mean(), reference.mean.as_slice());
        let ev = max_abs_diff(state.variance(), &ref_var);
        max_mean = max_mean.max(em);
        max_var = max_var.max(ev);
        if em <= params.tolerance && ev <= params.tolerance {
            equivalent += 1;
        }

        let mut shuffled = PosteriorState::new(Arc::clone(&prior), noise)?;
        let mut order: Vec<usize> = (0..t).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for &i in &order {
            shuffled.condition(obs[i].0, obs[i].1)?;
        }
        max_exchange = max_exchange
            .max(max_abs_diff(state.mean(), shuffled.mean()))
            .max(max_abs_diff(state.variance(), shuffled.variance()));
    }

    let mut moment_passes = 0;
    let mut worst_z = 0.0f64;
    let mut draw_rng = root.stream(Stream::Noise);
    for _ in 0..params.moment_instances {
        let n = rng.random_range(4..=8);
        let prior = random_prior(&mut rng, n, 1)?;
        let noise = 0.1;
        let mut state = PosteriorState::new(Arc::clone(&prior), noise)?;
        for _ in 0..rng.random_range(1..=6) {
            let arm = rng.random_range(0..n);
            state.condition(arm, rng.random_range(-2.0..2.0))?;
        }
        let reference = dense::posterior(&prior, noise, state.observed_arms(), state.observed_rewards());
        let mut a = vec![0.0; n];
        fill_standard_normal(&mut rng, &mut a);
        let a = DVector::from_vec(a);
        let exact_mean = a.dot(&reference.mean);
        let exact_var = (reference.cov.clone() * &a).dot(&a);

        let m = params.moment_draws;
        let mut out = vec![0.0; n];
        let mut scratch = Vec::new();
        let mut values = Vec::with_capacity(m);
        for _ in 0..m {
            state.sample_into(&mut draw_rng, &mut out, &mut scratch);
            values.push(out.iter().zip(a.iter()).map(|(x, w)| x * w).sum::<f64>());
        }
        let mf = m as f64;
        let mean = values.iter().sum::<f64>() / mf;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (mf - 1.0);
        let z_mean = (mean - exact_mean) / (exact_var / mf).sqrt();
        let z_var = (var - exact_var) / (exact_var * (2.0 / (mf - 1.0)).sqrt());
        let z = z_mean.abs().max(z_var.abs());
        worst_z = worst_z.max(z);
        if z <= 3.0 {
            moment_passes += 1;
        }
    }

    let exchangeable = max_exchange <= params.tolerance;
    Ok(GpOracleReport {
        cases: params.cases,
        equivalent_cases: equivalent,
        max_mean_error: max_mean,
        max_var_error: max_var,
        monotone_variance: monotone,
        exchangeable,
        max_exchange_error: max_exchange,
        moment_instances: params.moment_instances,
        moment_passes,
        worst_moment_z: worst_z,
        passed: equivalent == params.cases && monotone && exchangeable && moment_passes == params.moment_instances,
    })
}
