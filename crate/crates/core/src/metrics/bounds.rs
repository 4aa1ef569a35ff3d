use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AgentSummary, MetricsError};
use crate::agents::{AgentKind, ConfidenceSchedule};
use crate::environment::ExperimentResult;
use crate::gp::{GpError, MaterializedPrior, PosteriorState};
use crate::priors::Hyperprior;

/// `√(2 |X| log|X| (σ₀² + σ²) t)`.
pub fn theorem4_rhs(num_arms: usize, sigma0_sq: f64, noise_var: f64, t: usize) -> f64 {
    let n = num_arms as f64;
    (2.0 * n * n.ln() * (sigma0_sq + noise_var) * t as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigEstimate {
    /// Information gain of the greedily chosen set, a lower bound on `γ_T`.
    pub value: f64,
    /// `value / (1 − 1/e)`, an upper bound on `γ_T` by submodularity.
    pub upper: f64,
    /// Marginal gain of each greedy pick.
    pub gains: Vec<f64>,
}

/// Greedy maximization of `½ log det(I + σ⁻² K_A)` over sets of `horizon`
/// arms: repeatedly take the arm of largest posterior variance.
pub fn greedy_mig(prior: &Arc<MaterializedPrior>, horizon: usize, noise_var: f64) -> Result<MigEstimate, MetricsError> {
    let n = prior.num_arms();
    if horizon > n {
        return Err(MetricsError::HorizonTooLong { horizon, arms: n });
    }
    let mut state = PosteriorState::new(Arc::clone(prior), noise_var).map_err(gp)?;
    let mut gains = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let (arm, var) = crate::agents::argmax(state.variance());
        gains.push(0.5 * (1.0 + var / noise_var).ln());
        // Only variances matter, so the observed value is arbitrary.
        state.condition(arm, 0.0).map_err(gp)?;
    }
    let value = gains.iter().sum::<f64>();
    Ok(MigEstimate { value, upper: value / (1.0 - (-1f64).exp()), gains })
}

fn gp(e: GpError) -> MetricsError {
    MetricsError::Gp(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigRow {
    pub prior: String,
    pub value: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigTable {
    pub horizon: usize,
    pub rows: Vec<MigRow>,
    /// Largest greedy value over priors.
    pub gamma_hat: f64,
    /// Hyperprior-weighted average of greedy values.
    pub gamma_bar: f64,
}

impl MigTable {
    pub fn compute(hyperprior: &Hyperprior, horizon: usize, noise_var: f64) -> Result<Self, MetricsError> {
        let mut rows = Vec::with_capacity(hyperprior.len());
        for p in hyperprior.priors() {
            let est = greedy_mig(p, horizon, noise_var)?;
            rows.push(MigRow { prior: p.id().to_string(), value: est.value, upper: est.upper });
        }
        let gamma_hat = rows.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
        let gamma_bar = rows.iter().zip(hyperprior.weights()).map(|(r, w)| w * r.value).sum();
        Ok(MigTable { horizon, rows, gamma_hat, gamma_bar })
    }

    fn gamma_hat_upper(&self) -> f64 {
        self.rows.iter().map(|r| r.upper).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem4Check {
    pub agent: AgentKind,
    pub rhs_final: f64,
    /// Smallest `rhs(t) − (mean_t + 3 se_t)` over steps.
    pub min_slack: f64,
    pub worst_step: usize,
    pub passed: bool,
}

impl Theorem4Check {
    pub fn evaluate(summary: &AgentSummary, num_arms: usize, sigma0_sq: f64, noise_var: f64) -> Self {
        let r = &summary.regret;
        let mut min_slack = f64::INFINITY;
        let mut worst_step = 0;
        for (i, (m, se)) in r.mean_curve.iter().zip(&r.se_curve).enumerate() {
            let slack = theorem4_rhs(num_arms, sigma0_sq, noise_var, i + 1) - (m + 3.0 * se);
            if slack < min_slack {
                min_slack = slack;
                worst_step = i + 1;
            }
        }
        Theorem4Check {
            agent: summary.agent,
            rhs_final: theorem4_rhs(num_arms, sigma0_sq, noise_var, r.mean_curve.len()),
            min_slack,
            worst_step,
            passed: min_slack >= 0.0,
        }
    }
}

/// The four terms of the PE-GP-TS high-probability bound, averaged over
/// episodes, plus the fraction of episodes whose regret stayed below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Terms {
    pub episodes: usize,
    pub beta_final: f64,
    pub xi_final: f64,
    /// `2 / log(1 + σ⁻²)`.
    pub c: f64,
    /// `2 |P| B_{p*}` averaged over episodes.
    pub prior_term: f64,
    /// `2 √(ξ_T |P| T)`.
    pub noise_term: f64,
    /// `2 √(C T β_T γ̂ |P|)` with the submodular upper bound on `γ̂`.
    pub mig_term: f64,
    /// `2 √(C T β_T Σ σ²_{t,p*}(x*))` averaged over episodes.
    pub optimum_variance_term: f64,
    pub covered_fraction: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRegret {
    pub agent: AgentKind,
    pub final_mean: f64,
    pub final_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub num_arms: usize,
    pub num_priors: usize,
    pub horizon: usize,
    pub sigma0_sq: f64,
    pub noise_var: f64,
    pub empirical_regret: Vec<AgentRegret>,
    pub theorem4_rhs: f64,
    pub theorem4: Option<Theorem4Check>,
    pub theorem1: Option<Theorem1Terms>,
    pub mig: Option<MigTable>,
}

fn theorem1_terms(result: &ExperimentResult, mig: &MigTable) -> Option<Theorem1Terms> {
    let cfg = &result.config;
    let k = result.prior_ids.len();
    let schedule = ConfidenceSchedule::new(cfg.delta, result.num_arms, k, cfg.noise_var).ok()?;
    let episodes: Vec<_> = result
        .records
        .iter()
        .filter(|r| r.agent == AgentKind::PeGpTs && !r.aborted && r.true_prior.is_some())
        .collect();
    if episodes.is_empty() {
        return None;
    }
    let t = cfg.horizon;
    let tf = t as f64;
    let beta_final = schedule.beta(t);
    let xi_final = schedule.xi(t);
    let c = 2.0 / (1.0 + 1.0 / cfg.noise_var).ln();
    let noise_term = 2.0 * (xi_final * k as f64 * tf).sqrt();
    let mig_term = 2.0 * (c * tf * beta_final * mig.gamma_hat_upper() * k as f64).sqrt();
    let mut prior_sum = 0.0;
    let mut var_sum = 0.0;
    let mut covered = 0usize;
    for e in &episodes {
        let star = e.true_prior.expect("filtered");
        let b = schedule.beta(1) + result.prior_max_abs_mean[star];
        let prior_term = 2.0 * k as f64 * b;
        let s2: f64 = e.steps.iter().filter_map(|s| s.sigma2_star).sum();
        let var_term = 2.0 * (c * tf * beta_final * s2).sqrt();
        prior_sum += prior_term;
        var_sum += var_term;
        if e.final_regret() <= prior_term + noise_term + mig_term + var_term {
            covered += 1;
        }
    }
    let m = episodes.len() as f64;
    let covered_fraction = covered as f64 / m;
    Some(Theorem1Terms {
        episodes: episodes.len(),
        beta_final,
        xi_final,
        c,
        prior_term: prior_sum / m,
        noise_term,
        mig_term,
        optimum_variance_term: var_sum / m,
        covered_fraction,
        passed: covered_fraction >= 1.0 - cfg.delta,
    })
}

/// Bound terms for a finished experiment. MIG-dependent terms need a prior
/// set that is shared by all seeds and a horizon no longer than the arm count.
pub fn bound_report(result: &ExperimentResult, summaries: &[AgentSummary]) -> Result<BoundReport, MetricsError> {
    let cfg = &result.config;
    let mig = match &result.hyperprior {
        Some(h) if cfg.horizon <= result.num_arms => Some(MigTable::compute(h, cfg.horizon, cfg.noise_var)?),
        _ => None,
    };
    let theorem1 = mig.as_ref().and_then(|m| theorem1_terms(result, m));
    Ok(BoundReport {
        num_arms: result.num_arms,
        num_priors: result.prior_ids.len(),
        horizon: cfg.horizon,
        sigma0_sq: result.sigma0_sq,
        noise_var: cfg.noise_var,
        empirical_regret: summaries
            .iter()
            .map(|s| AgentRegret { agent: s.agent, final_mean: s.regret.final_mean, final_se: s.regret.final_se })
            .collect(),
        theorem4_rhs: theorem4_rhs(result.num_arms, result.sigma0_sq, cfg.noise_var, cfg.horizon),
        theorem4: summaries
            .iter()
            .find(|s| s.agent == AgentKind::HpGpTs && s.regret.episodes > 0)
            .map(|s| Theorem4Check::evaluate(s, result.num_arms, result.sigma0_sq, cfg.noise_var)),
        theorem1,
        mig,
    })
}
