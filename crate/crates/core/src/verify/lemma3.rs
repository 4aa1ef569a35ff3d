//! Expected posterior probability of the true prior for two priors that share
//! a kernel.
//!
//! With `Σ = K + σ²I` over the queried arms and `μ` the difference of the two
//! prior means there, write `m = ‖Σ^{-1/2} μ‖` and `c = P₀(p)`. The lower bound is
//!
//! ```text
//! 1 + c e^{m²} Φ(−3m/2) − Φ(−m/2) / c
//! ```
//!
//! and replacing each `Φ` by an elementary Mills-ratio bound of the right
//! direction gives a weaker closed form.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::VerifyError;
use crate::gp::MaterializedPrior;
use crate::kernels::{gram_matrix, ArmSet, KernelSpec};
use crate::rng::{fill_standard_normal, SeedRoot, Stream};

/// `ln Φ(−x)`.
fn ln_phi_neg(x: f64) -> f64 {
    (0.5 * erfc(x / SQRT_2)).ln()
}

/// The bound with exact normal tails.
pub fn lemma3_rhs(separation: f64, p0: f64) -> f64 {
    let m = separation;
    1.0 + p0 * (m * m + ln_phi_neg(1.5 * m)).exp() - ln_phi_neg(0.5 * m).exp() / p0
}

/// The bound with elementary tail bounds in place of `Φ`.
pub fn lemma3_rhs_sharp(separation: f64, p0: f64) -> f64 {
    let m = separation;
    // √(2/π) = 2/√(2π) = FRAC_2_SQRT_PI / √2
    let k = FRAC_2_SQRT_PI / SQRT_2 * (-m * m / 8.0).exp();
    1.0 + p0 * k * 2.0 / (3.0 * m + (9.0 * m * m + 16.0).sqrt())
        - k / p0 * 2.0 / (m + (m * m + 32.0 / PI).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Row {
    pub p0: f64,
    pub steps: usize,
    pub separation: f64,
    pub rhs: f64,
    pub rhs_sharp: f64,
    pub estimate: f64,
    pub se: f64,
    /// `estimate − rhs`.
    pub margin: f64,
    pub passed: bool,
}

/// Monte-Carlo estimate of `E[P_{t+1}(p) | p* = p]` after observing `arms`,
/// compared with the analytic bound.
pub fn check_lemma3_bound<R: Rng + ?Sized>(
    truth: &MaterializedPrior,
    other: &MaterializedPrior,
    arms: &[usize],
    noise_var: f64,
    p0: f64,
    draws: usize,
    rng: &mut R,
) -> Result<Lemma3Row, VerifyError> {
    if truth.num_arms() != other.num_arms() {
        return Err(VerifyError::KernelMismatch);
    }
    let diff = (truth.cov() - other.cov()).abs().max();
    if diff > 1e-12 {
        return Err(VerifyError::KernelMismatch);
    }
    let t = arms.len();
    let sigma = DMatrix::from_fn(t, t, |i, j| {
        truth.cov()[(arms[i], arms[j])] + if i == j { noise_var } else { 0.0 }
    });
    let chol = sigma.cholesky().ok_or(VerifyError::Singular)?;
    let l = chol.l();
    let gap = DVector::from_fn(t, |i, _| other.mean()[arms[i]] - truth.mean()[arms[i]]);
    let d = l.solve_lower_triangular(&gap).ok_or(VerifyError::Singular)?;
    let m = d.norm();

    // With y = μ_p + L z, log N_p(y) − log N_q(y) = −z·d + ½‖d‖².
    let half = 0.5 * d.norm_squared();
    let odds = (1.0 - p0) / p0;
    let mut z = vec![0.0; t];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        fill_standard_normal(rng, &mut z);
        let q = half - z.iter().zip(d.iter()).map(|(a, b)| a * b).sum::<f64>();
        let post = 1.0 / (1.0 + odds * (-q).exp());
        sum += post;
        sum_sq += post * post;
    }
    let n = draws as f64;
    let estimate = sum / n;
    let var = ((sum_sq - n * estimate * estimate) / (n - 1.0)).max(0.0);
    let se = (var / n).sqrt();
    let rhs = lemma3_rhs(m, p0);
    Ok(Lemma3Row {
        p0,
        steps: t,
        separation: m,
        rhs,
        rhs_sharp: lemma3_rhs_sharp(m, p0),
        estimate,
        se,
        margin: estimate - rhs,
        passed: estimate >= rhs - 3.0 * se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Report {
    pub rows: Vec<Lemma3Row>,
    /// The closed form never exceeds the exact-tail bound.
    pub sharp_below_exact: bool,
    pub passed: bool,
}

pub const SWEEP_P0: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const SWEEP_GAPS: [f64; 4] = [0.0, 0.25, 1.0, 3.0];
const SWEEP_ARMS: [usize; 5] = [0, 3, 6, 9, 1];

/// 20 configurations: every `(P₀, mean gap)` pair, observing the first
/// `1..=5` arms of a fixed sequence.
pub fn run(draws: usize, seed: u64) -> Result<Lemma3Report, VerifyError> {
    let arms = ArmSet::equispaced(10, 0.0, 9.0);
    let spec = KernelSpec::rbf(2.0)?;
    let cov = gram_matrix(&spec, &arms)?;
    let noise_var = 0.0625;
    let truth = MaterializedPrior::new("zero", vec![0.0; 10], cov.clone())?;
    let configs: Vec<(usize, f64, f64)> = SWEEP_GAPS
        .iter()
        .flat_map(|&g| SWEEP_P0.iter().map(move |&p| (g, p)))
        .enumerate()
        .map(|(i, (g, p))| (i, g, p))
        .collect();
    let rows: Vec<Lemma3Row> = configs
        .par_iter()
        .map(|&(i, gap, p0)| {
            let other = MaterializedPrior::new("shifted", vec![gap; 10], cov.clone())?;
            let mut rng = SeedRoot::new("lemma3", seed).stream(Stream::Agent(i as u64));
            check_lemma3_bound(&truth, &other, &SWEEP_ARMS[..1 + i % 5], noise_var, p0, draws, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let sharp_below_exact = rows.iter().all(|r| r.rhs_sharp <= r.rhs + 1e-12);
    let passed = sharp_below_exact && rows.iter().all(|r| r.passed);
    Ok(Lemma3Report { rows, sharp_below_exact, passed })
}
