//! Regret statistics, prior-selection diagnostics and bound terms.

mod bounds;
mod summary;

pub use bounds::{
    bound_report, greedy_mig, theorem4_rhs, AgentRegret, BoundReport, MigEstimate, MigRow, MigTable, Theorem1Terms,
    Theorem4Check,
};
pub use summary::{
    reference_entropy, summarize, AgentSummary, PriorSelectionStats, Quantile, ReferenceEntropy, RegretSummary,
    QUANTILE_LEVELS, REFERENCE_Q,
};

use thiserror::Error;

use crate::gp::GpError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no episodes to summarize")]
    Empty,
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("horizon {horizon} exceeds the {arms} available arms")]
    HorizonTooLong { horizon: usize, arms: usize },
}

/// Sample mean and standard error `s / √n` (zero for a single value).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], level: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * level.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
