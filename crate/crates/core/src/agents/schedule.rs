use std::f64::consts::PI;

use super::AgentError;

/// Confidence parameters `β_t` and `ξ_t` for a given problem size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceSchedule {
    pub delta: f64,
    pub num_arms: usize,
    pub num_priors: usize,
    pub noise_var: f64,
}

impl ConfidenceSchedule {
    pub fn new(delta: f64, num_arms: usize, num_priors: usize, noise_var: f64) -> Result<Self, AgentError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(AgentError::BadDelta(delta));
        }
        Ok(ConfidenceSchedule { delta, num_arms, num_priors, noise_var })
    }

    /// `β_t = 2 log(2 |X| |P| π² t² / 3δ)`.
    pub fn beta(&self, t: usize) -> f64 {
        let t = t as f64;
        2.0 * (2.0 * self.num_arms as f64 * self.num_priors as f64 * PI * PI * t * t / (3.0 * self.delta)).ln()
    }

    /// The coverage-lemma variant `2 log(|X| |P| π² t² / 3δ)`.
    pub fn coverage_beta(&self, t: usize) -> f64 {
        let t = t as f64;
        2.0 * (self.num_arms as f64 * self.num_priors as f64 * PI * PI * t * t / (3.0 * self.delta)).ln()
    }

    /// `ξ_t = 2σ² log(|P| π² t² / 3δ)`.
    pub fn xi(&self, t: usize) -> f64 {
        let t = t as f64;
        2.0 * self.noise_var * (self.num_priors as f64 * PI * PI * t * t / (3.0 * self.delta)).ln()
    }
}
