//! Direct dense evaluation of the GP posterior, kept as an independent
//! reference for the incremental path.
//!
//! Everything here is `O(n³)`: the full posterior covariance is formed, the
//! observation system is solved by LU and samples come from an eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use super::MaterializedPrior;
use crate::rng::fill_standard_normal;

#[derive(Debug, Clone)]
pub struct DensePosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Posterior mean and full covariance given `(obs_idx, obs_y)`.
pub fn posterior(prior: &MaterializedPrior, noise_var: f64, obs_idx: &[usize], obs_y: &[f64]) -> DensePosterior {
    let n = prior.num_arms();
    let t = obs_idx.len();
    let k = DMatrix::from_fn(n, n, |i, j| prior.covariance(i, j));
    let mu = DVector::from_column_slice(prior.mean());
    if t == 0 {
        return DensePosterior { mean: mu, cov: k };
    }
    let a = DMatrix::from_fn(t, t, |i, j| {
        k[(obs_idx[i], obs_idx[j])] + if i == j { noise_var } else { 0.0 }
    });
    let kx = DMatrix::from_fn(t, n, |i, j| k[(obs_idx[i], j)]);
    let resid = DVector::from_fn(t, |i, _| obs_y[i] - mu[obs_idx[i]]);
    let lu = a.lu();
    let a_inv_kx = lu.solve(&kx).expect("observation system is singular");
    let a_inv_r = lu.solve(&resid).expect("observation system is singular");
    let mean = &mu + kx.transpose() * a_inv_r;
    let cov = &k - kx.transpose() * a_inv_kx;
    DensePosterior { mean, cov: (&cov + cov.transpose()) * 0.5 }
}

impl DensePosterior {
    /// Symmetric square root of the covariance, negative eigenvalues clipped.
    pub fn sqrt_cov(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.cov.clone());
        let scales = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&scales) * eig.eigenvectors.transpose()
    }

    pub fn sample_with_root<R: Rng + ?Sized>(&self, root: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
        let mut z = vec![0.0; self.mean.len()];
        fill_standard_normal(rng, &mut z);
        &self.mean + root * DVector::from_vec(z)
    }
}
