use serde::{Deserialize, Serialize};

use super::{mean_se, quantile, MetricsError};
use crate::agents::AgentKind;
use crate::environment::EpisodeRecord;

pub const QUANTILE_LEVELS: [f64; 6] = [0.05, 0.25, 0.5, 0.75, 0.9, 0.95];
pub const REFERENCE_Q: [f64; 2] = [0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    /// Completed episodes that enter the statistics.
    pub episodes: usize,
    /// Episodes cut short because every prior was eliminated.
    pub aborted: usize,
    pub mean_curve: Vec<f64>,
    pub se_curve: Vec<f64>,
    pub final_mean: f64,
    pub final_se: f64,
    pub final_quantiles: Vec<Quantile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntropy {
    pub q: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSelectionStats {
    /// `confusion[p*][p]`: percentage of rounds with true prior `p*` that
    /// selected `p`. Rows without any round are all zero.
    pub confusion: Vec<Vec<f64>>,
    pub empty_rows: Vec<bool>,
    /// Mean over episodes of the fraction of rounds with `p_t = p*`.
    pub accuracy: f64,
    /// Fraction of all rounds in which each prior was selected.
    pub selection_share: Vec<f64>,
    /// Mean `|P_t|` per step, for elimination agents.
    pub active_curve: Option<Vec<f64>>,
    /// Mean hyperposterior entropy per step, for hyperposterior agents.
    pub entropy_curve: Option<Vec<f64>>,
    pub reference_entropies: Vec<ReferenceEntropy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: AgentKind,
    pub regret: RegretSummary,
    /// Absent for single-prior agents.
    pub selection: Option<PriorSelectionStats>,
}

/// Entropy of a distribution with mass `q` on one of `k` outcomes and the
/// rest spread evenly.
pub fn reference_entropy(q: f64, k: usize) -> f64 {
    let h = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    if k <= 1 {
        return 0.0;
    }
    h(q) + (k - 1) as f64 * h((1.0 - q) / (k - 1) as f64)
}

fn mean_curve(rows: &[Vec<f64>]) -> Vec<f64> {
    let len = rows.iter().map(Vec::len).min().unwrap_or(0);
    (0..len).map(|t| rows.iter().map(|r| r[t]).sum::<f64>() / rows.len() as f64).collect()
}

fn regret_summary(episodes: &[&EpisodeRecord], aborted: usize) -> RegretSummary {
    let curves: Vec<Vec<f64>> = episodes.iter().map(|e| e.cumulative_regret()).collect();
    let horizon = curves.iter().map(Vec::len).min().unwrap_or(0);
    let mut mean_curve = Vec::with_capacity(horizon);
    let mut se_curve = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let col: Vec<f64> = curves.iter().map(|c| c[t]).collect();
        let (m, se) = mean_se(&col);
        mean_curve.push(m);
        se_curve.push(se);
    }
    let finals: Vec<f64> = curves.iter().filter_map(|c| c.last().copied()).collect();
    let (final_mean, final_se) = mean_se(&finals);
    let mut sorted = finals.clone();
    sorted.sort_by(f64::total_cmp);
    RegretSummary {
        episodes: episodes.len(),
        aborted,
        mean_curve,
        se_curve,
        final_mean,
        final_se,
        final_quantiles: QUANTILE_LEVELS
            .iter()
            .map(|&level| Quantile { level, value: quantile(&sorted, level) })
            .collect(),
    }
}

fn selection_stats(episodes: &[&EpisodeRecord], num_priors: usize) -> Option<PriorSelectionStats> {
    if episodes.iter().all(|e| e.steps.iter().all(|s| s.prior.is_none())) {
        return None;
    }
    let mut counts = vec![vec![0usize; num_priors]; num_priors];
    let mut share = vec![0usize; num_priors];
    let mut total = 0usize;
    let mut accuracies = Vec::new();
    for e in episodes {
        let mut hits = 0usize;
        for s in &e.steps {
            let Some(p) = s.prior else { continue };
            share[p] += 1;
            total += 1;
            if let Some(star) = e.true_prior {
                counts[star][p] += 1;
                hits += usize::from(p == star);
            }
        }
        if e.true_prior.is_some() && !e.steps.is_empty() {
            accuracies.push(hits as f64 / e.steps.len() as f64);
        }
    }
    let mut empty_rows = Vec::with_capacity(num_priors);
    let confusion = counts
        .iter()
        .map(|row| {
            let n: usize = row.iter().sum();
            empty_rows.push(n == 0);
            row.iter().map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 }).collect()
        })
        .collect();
    let curve = |f: &dyn Fn(&crate::environment::StepRecord) -> Option<f64>| {
        let rows: Option<Vec<Vec<f64>>> =
            episodes.iter().map(|e| e.steps.iter().map(f).collect::<Option<Vec<f64>>>()).collect();
        rows.filter(|r| !r.is_empty()).map(|r| mean_curve(&r))
    };
    Some(PriorSelectionStats {
        confusion,
        empty_rows,
        accuracy: if accuracies.is_empty() { 0.0 } else { accuracies.iter().sum::<f64>() / accuracies.len() as f64 },
        selection_share: share.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect(),
        active_curve: curve(&|s| s.active_priors.map(|a| a as f64)),
        entropy_curve: curve(&|s| s.entropy),
        reference_entropies: REFERENCE_Q
            .iter()
            .map(|&q| ReferenceEntropy { q, value: reference_entropy(q, num_priors) })
            .collect(),
    })
}

/// Per-agent statistics in order of first appearance. Aborted episodes are
/// counted but left out of every curve and average.
pub fn summarize(records: &[EpisodeRecord], num_priors: usize) -> Result<Vec<AgentSummary>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut order: Vec<AgentKind> = Vec::new();
    for r in records {
        if !order.contains(&r.agent) {
            order.push(r.agent);
        }
    }
    Ok(order
        .into_iter()
        .map(|agent| {
            let all: Vec<&EpisodeRecord> = records.iter().filter(|r| r.agent == agent).collect();
            let done: Vec<&EpisodeRecord> = all.iter().copied().filter(|r| !r.aborted).collect();
            AgentSummary {
                agent,
                regret: regret_summary(&done, all.len() - done.len()),
                selection: selection_stats(&done, num_priors),
            }
        })
        .collect())
}
