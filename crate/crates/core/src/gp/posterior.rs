use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use super::{GpError, MaterializedPrior};
use crate::rng::fill_standard_normal;

/// Pivots below this fraction of the new diagonal trigger a full refactorization.
const PIVOT_TOL: f64 = 1e-12;

/// Posterior of one prior given the observations so far.
///
/// With `L Lᵀ = K_obs + σ²I` the state keeps the projected cross-covariance
/// `V = L⁻¹ K(X, ·)` (one row of length `n` per observation) and the whitened
/// residual `w = L⁻¹ (y − μ(X))`. Then
///
/// ```text
/// μ_t = μ + Vᵀ w,        σ²_t = diag(K) − colsum(V ∘ V)
/// ```
///
/// and each new observation appends one row to `L`, `V` and `w` in `O(n t)`.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    prior: Arc<MaterializedPrior>,
    noise_var: f64,
    obs_idx: Vec<usize>,
    obs_y: Vec<f64>,
    /// Packed rows of the lower factor: row `i` starts at `i (i + 1) / 2`.
    chol: Vec<f64>,
    proj: Vec<f64>,
    whitened: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl PosteriorState {
    pub fn new(prior: Arc<MaterializedPrior>, noise_var: f64) -> Result<Self, GpError> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(GpError::BadNoise(noise_var));
        }
        let n = prior.num_arms();
        let mean = prior.mean().to_vec();
        let var = (0..n).map(|i| prior.covariance(i, i)).collect();
        Ok(PosteriorState {
            prior,
            noise_var,
            obs_idx: Vec::new(),
            obs_y: Vec::new(),
            chol: Vec::new(),
            proj: Vec::new(),
            whitened: Vec::new(),
            mean,
            var,
        })
    }

    pub fn prior(&self) -> &Arc<MaterializedPrior> {
        &self.prior
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn num_arms(&self) -> usize {
        self.mean.len()
    }

    pub fn num_observations(&self) -> usize {
        self.obs_idx.len()
    }

    pub fn observed_arms(&self) -> &[usize] {
        &self.obs_idx
    }

    pub fn observed_rewards(&self) -> &[f64] {
        &self.obs_y
    }

    /// Posterior mean at every arm.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Posterior variance at every arm, clamped at zero.
    pub fn variance(&self) -> &[f64] {
        &self.var
    }

    pub fn posterior_mean_var(&self) -> (Vec<f64>, Vec<f64>) {
        (self.mean.clone(), self.var.clone())
    }

    pub fn std_at(&self, arm: usize) -> f64 {
        self.var[arm].sqrt()
    }

    /// Lower factor of `K_obs + σ²I` as a dense matrix.
    pub fn obs_factor(&self) -> DMatrix<f64> {
        let t = self.num_observations();
        DMatrix::from_fn(t, t, |i, j| if j <= i { self.chol[i * (i + 1) / 2 + j] } else { 0.0 })
    }

    /// Adds the observation `(arm, reward)`.
    pub fn condition(&mut self, arm: usize, reward: f64) -> Result<(), GpError> {
        let n = self.num_arms();
        if arm >= n {
            return Err(GpError::ArmOutOfRange { arm, n });
        }
        let t = self.num_observations();
        let cross: Vec<f64> = (0..t).map(|i| self.proj[i * n + arm]).collect();
        let diag = self.prior.covariance(arm, arm) + self.noise_var;
        let pivot = diag - cross.iter().map(|c| c * c).sum::<f64>();
        self.obs_idx.push(arm);
        self.obs_y.push(reward);
        if !(pivot > PIVOT_TOL * diag) {
            return self.refactorize();
        }
        let d = pivot.sqrt();

        let mut row = self.prior.cov_column(arm).to_vec();
        row[arm] += self.prior.jitter();
        for (i, &c) in cross.iter().enumerate() {
            let prev = &self.proj[i * n..(i + 1) * n];
            for (r, &p) in row.iter_mut().zip(prev) {
                *r -= c * p;
            }
        }
        row.iter_mut().for_each(|r| *r /= d);

        let residual = reward - self.prior.mean()[arm];
        let w_new = (residual - dot(&cross, &self.whitened)) / d;

        for ((m, v), &r) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(&row) {
            *m += r * w_new;
            *v = (*v - r * r).max(0.0);
        }
        self.chol.extend_from_slice(&cross);
        self.chol.push(d);
        self.proj.extend_from_slice(&row);
        self.whitened.push(w_new);
        Ok(())
    }

    /// Rebuilds every cached quantity from the raw observations.
    pub fn refactorize(&mut self) -> Result<(), GpError> {
        let n = self.num_arms();
        let t = self.num_observations();
        let prior = Arc::clone(&self.prior);
        let k_obs = DMatrix::from_fn(t, t, |i, j| {
            let c = prior.covariance(self.obs_idx[i], self.obs_idx[j]);
            if i == j {
                c + self.noise_var
            } else {
                c
            }
        });
        let l = k_obs
            .cholesky()
            .ok_or_else(|| GpError::IllConditioned { prior: prior.id().to_string(), observations: t })?
            .unpack();

        self.chol.clear();
        for i in 0..t {
            self.chol.extend((0..=i).map(|j| l[(i, j)]));
        }
        let cross = DMatrix::from_fn(t, n, |i, j| prior.covariance(self.obs_idx[i], j));
        let proj = l
            .solve_lower_triangular(&cross)
            .ok_or_else(|| GpError::IllConditioned { prior: prior.id().to_string(), observations: t })?;
        self.proj = (0..t).flat_map(|i| proj.row(i).iter().copied().collect::<Vec<_>>()).collect();
        let resid: Vec<f64> = self.obs_idx.iter().zip(&self.obs_y).map(|(&a, &y)| y - prior.mean()[a]).collect();
        self.whitened = forward_solve(&self.chol, &resid);

        self.mean.copy_from_slice(prior.mean());
        for (j, v) in self.var.iter_mut().enumerate() {
            *v = prior.covariance(j, j);
        }
        for i in 0..t {
            let row = &self.proj[i * n..(i + 1) * n];
            let w = self.whitened[i];
            for ((m, v), &r) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(row) {
                *m += r * w;
                *v -= r * r;
            }
        }
        self.var.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(())
    }

    /// Joint posterior draw over all arms by pathwise (Matheron) updating:
    /// a prior draw `f₀` is corrected with `K(·,X)(K_XX + σ²I)⁻¹(y − f₀(X) − ε)`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], scratch: &mut Vec<f64>) {
        let n = self.num_arms();
        let t = self.num_observations();
        scratch.resize(n.max(t), 0.0);
        fill_standard_normal(rng, &mut scratch[..n]);
        self.prior.transform_standard(&scratch[..n], out);
        if t == 0 {
            return;
        }
        fill_standard_normal(rng, &mut scratch[..t]);
        let sd = self.noise_var.sqrt();
        let resid: Vec<f64> = (0..t)
            .map(|i| self.obs_y[i] - out[self.obs_idx[i]] - sd * scratch[i])
            .collect();
        let u = forward_solve(&self.chol, &resid);
        for (i, &ui) in u.iter().enumerate() {
            let row = &self.proj[i * n..(i + 1) * n];
            for (o, &r) in out.iter_mut().zip(row) {
                *o += ui * r;
            }
        }
    }

    pub fn sample_posterior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.num_arms()];
        self.sample_into(rng, &mut out, &mut Vec::new());
        out
    }

    /// `log N(reward; μ_t(arm), σ²_t(arm) + σ²)`.
    pub fn predictive_loglik(&self, arm: usize, reward: f64) -> f64 {
        let s2 = self.var[arm] + self.noise_var;
        let r = reward - self.mean[arm];
        -0.5 * ((2.0 * PI * s2).ln() + r * r / s2)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `L x = b` for a packed lower-triangular `L`.
fn forward_solve(chol: &[f64], b: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(b.len());
    for (i, &bi) in b.iter().enumerate() {
        let row = &chol[i * (i + 1) / 2..(i + 1) * (i + 2) / 2];
        let s = bi - dot(&row[..i], &x);
        x.push(s / row[i]);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::dense;
    use crate::kernels::{ArmSet, KernelKind, KernelSpec};
    use crate::rng::{SeedRoot, Stream};
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn scalar_prior() -> Arc<MaterializedPrior> {
        Arc::new(MaterializedPrior::new("unit", vec![0.0], DMatrix::from_element(1, 1, 1.0)).unwrap())
    }

    fn families() -> Vec<KernelSpec> {
        vec![
            KernelSpec::rbf(1.0).unwrap(),
            KernelSpec::new(KernelKind::RationalQuadratic { alpha: 0.5 }, 1.0).unwrap(),
            KernelSpec::new(KernelKind::Matern52, 1.0).unwrap(),
            KernelSpec::new(KernelKind::Matern32, 1.0).unwrap(),
            KernelSpec::new(KernelKind::Periodic { period: 5.0 }, 1.0).unwrap(),
            KernelSpec::new(KernelKind::Linear { variance: 0.0025 }, 1.0).unwrap(),
        ]
    }

    #[test]
    fn empty_state_is_the_prior() {
        let arms = ArmSet::equispaced(7, 0.0, 20.0);
        let prior = Arc::new(MaterializedPrior::from_kernel("p", &KernelSpec::rbf(2.0).unwrap(), &arms).unwrap());
        let s = PosteriorState::new(prior.clone(), 0.0625).unwrap();
        let (m, v) = s.posterior_mean_var();
        assert_eq!(m, prior.mean());
        for (i, vi) in v.iter().enumerate() {
            assert_eq!(*vi, prior.covariance(i, i));
        }
    }

    #[test]
    fn scalar_update_matches_hand_values() {
        let mut s = PosteriorState::new(scalar_prior(), 0.0625).unwrap();
        s.condition(0, 1.0).unwrap();
        // the jitter of 1e-8 shifts the prior variance slightly
        let k = 1.0 + 1e-8;
        assert!((s.mean()[0] - k / (k + 0.0625)).abs() < 1e-14);
        assert!((s.mean()[0] - 0.941176).abs() < 1e-6);
        assert!((s.variance()[0] - 0.058824).abs() < 1e-6);
    }

    #[test]
    fn repeated_observation_moves_towards_it() {
        let mut s = PosteriorState::new(scalar_prior(), 0.0625).unwrap();
        s.condition(0, 1.0).unwrap();
        let (m1, v1) = (s.mean()[0], s.variance()[0]);
        s.condition(0, 1.0).unwrap();
        // 2×2 hand computation: posterior mean 2k/(2k + σ²)
        let k = 1.0 + 1e-8;
        assert!((s.mean()[0] - 2.0 * k / (2.0 * k + 0.0625)).abs() < 1e-14);
        assert!((1.0 - s.mean()[0]) < (1.0 - m1));
        assert!(s.variance()[0] < v1);
    }

    #[test]
    fn fifty_repeats_shrink_variance() {
        let arms = ArmSet::equispaced(20, 0.0, 20.0);
        let prior = Arc::new(MaterializedPrior::from_kernel("p", &KernelSpec::rbf(1.0).unwrap(), &arms).unwrap());
        let mut s = PosteriorState::new(prior, 0.0625).unwrap();
        for _ in 0..50 {
            s.condition(4, 0.3).unwrap();
        }
        assert!(s.variance()[4] <= 0.0625 / 50.0 + 1e-6);
    }

    #[test]
    fn predictive_loglik_scalar() {
        let prior = Arc::new(MaterializedPrior::new("u", vec![0.0], DMatrix::from_element(1, 1, 1.0)).unwrap());
        let s = PosteriorState::new(prior, 0.0625).unwrap();
        let expected = -0.5 * (2.0 * PI * (1.0625 + 1e-8)).ln();
        assert!((s.predictive_loglik(0, 0.0) - expected).abs() < 1e-12);
        assert!((s.predictive_loglik(0, 0.0) + 0.94926).abs() < 1e-5);
        assert!(s.predictive_loglik(0, 0.0) > s.predictive_loglik(0, 0.01));
        assert!(s.predictive_loglik(0, 0.0) > s.predictive_loglik(0, -0.01));
    }

    #[test]
    fn rejects_bad_arm_and_noise() {
        let mut s = PosteriorState::new(scalar_prior(), 0.1).unwrap();
        assert_eq!(s.condition(1, 0.0), Err(GpError::ArmOutOfRange { arm: 1, n: 1 }));
        assert!(matches!(PosteriorState::new(scalar_prior(), 0.0), Err(GpError::BadNoise(_))));
    }

    #[test]
    fn matches_dense_oracle_and_refactorization() {
        let mut rng = SeedRoot::new("gp-unit", 0).stream(Stream::Environment);
        for (c, spec) in families().iter().enumerate() {
            let n = 12 + c;
            let arms = ArmSet::new((0..n).map(|_| vec![rng.random_range(0.0..20.0)]).collect()).unwrap();
            let prior = Arc::new(MaterializedPrior::from_kernel("p", spec, &arms).unwrap());
            let mut s = PosteriorState::new(prior.clone(), 0.0625).unwrap();
            for _ in 0..10 {
                let prev = s.variance().to_vec();
                s.condition(rng.random_range(0..n), rng.random_range(-2.0..2.0)).unwrap();
                for (a, b) in s.variance().iter().zip(&prev) {
                    assert!(*a <= b + 1e-10);
                }
            }
            let oracle = dense::posterior(&prior, 0.0625, s.observed_arms(), s.observed_rewards());
            for i in 0..n {
                assert!((s.mean()[i] - oracle.mean[i]).abs() < 1e-8);
                assert!((s.variance()[i] - oracle.cov[(i, i)].max(0.0)).abs() < 1e-8);
            }
            // factor matches a from-scratch factorization
            let l = s.obs_factor();
            let mut r = s.clone();
            r.refactorize().unwrap();
            let rel = (&l - r.obs_factor()).norm() / r.obs_factor().norm();
            assert!(rel < 1e-6);
        }
    }

    #[test]
    fn order_of_observations_does_not_matter() {
        let mut rng = SeedRoot::new("gp-perm", 1).stream(Stream::Environment);
        let arms = ArmSet::equispaced(15, 0.0, 20.0);
        let prior = Arc::new(MaterializedPrior::from_kernel("p", &KernelSpec::rbf(2.0).unwrap(), &arms).unwrap());
        let mut obs: Vec<(usize, f64)> = (0..10).map(|_| (rng.random_range(0..15), rng.random_range(-1.0..1.0))).collect();
        let mut a = PosteriorState::new(prior.clone(), 0.0625).unwrap();
        obs.iter().for_each(|&(x, y)| a.condition(x, y).unwrap());
        obs.shuffle(&mut rng);
        let mut b = PosteriorState::new(prior, 0.0625).unwrap();
        obs.iter().for_each(|&(x, y)| b.condition(x, y).unwrap());
        for i in 0..15 {
            assert!((a.mean()[i] - b.mean()[i]).abs() < 1e-8);
            assert!((a.variance()[i] - b.variance()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn noiseless_limit_interpolates() {
        let arms = ArmSet::equispaced(6, 0.0, 5.0);
        let prior = Arc::new(MaterializedPrior::from_kernel("p", &KernelSpec::rbf(1.0).unwrap(), &arms).unwrap());
        let mut s = PosteriorState::new(prior, 1e-10).unwrap();
        s.condition(2, 0.7).unwrap();
        let mut rng = SeedRoot::new("noiseless", 0).stream(Stream::Agent(0));
        let draws: Vec<f64> = (0..2000).map(|_| s.sample_posterior(&mut rng)[2]).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
        assert!(sd <= 1e-4, "sd {sd}");
        assert!((mean - 0.7).abs() < 1e-4);
    }

    #[test]
    fn pivot_failure_falls_back_to_refactorization() {
        let prior = scalar_prior();
        let mut s = PosteriorState::new(prior, 1e-30).unwrap();
        s.condition(0, 1.0).unwrap();
        // second observation at the same arm has a pivot of roughly σ², far below
        // the tolerance; the refactorization path still succeeds or reports failure
        match s.condition(0, 1.0) {
            Ok(()) => assert_eq!(s.num_observations(), 2),
            Err(e) => assert!(matches!(e, GpError::IllConditioned { .. })),
        }
    }
}
