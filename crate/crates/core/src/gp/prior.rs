use nalgebra::DMatrix;
use rand::Rng;

use super::GpError;
use crate::kernels::{gram_matrix, ArmSet, KernelSpec};
use crate::rng::fill_standard_normal;

/// Relative jitter added to the prior covariance before factorization.
pub const RELATIVE_JITTER: f64 = 1e-8;

/// A GP prior realized over a finite arm set: mean vector, covariance matrix
/// and the lower Cholesky factor of `cov + jitter·I`.
#[derive(Debug, Clone)]
pub struct MaterializedPrior {
    id: String,
    kernel: Option<KernelSpec>,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    jitter: f64,
    chol: DMatrix<f64>,
}

impl MaterializedPrior {
    pub fn new(id: impl Into<String>, mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self, GpError> {
        let id = id.into();
        let n = mean.len();
        if n == 0 {
            return Err(GpError::Empty);
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(GpError::DimensionMismatch { expected: n, got: cov.nrows() });
        }
        let max_diag = cov.diagonal().max();
        if !(max_diag > 0.0 && max_diag.is_finite()) {
            return Err(GpError::NotPositiveDefinite(id));
        }
        let base = RELATIVE_JITTER * max_diag;
        // A handful of retries with growing jitter; synthetic priors succeed on
        // the first attempt.
        for attempt in 0..5 {
            let jitter = base * 10f64.powi(attempt);
            let mut shifted = cov.clone();
            for i in 0..n {
                shifted[(i, i)] += jitter;
            }
            if let Some(c) = shifted.cholesky() {
                return Ok(MaterializedPrior { id, kernel: None, mean, cov, jitter, chol: c.unpack() });
            }
        }
        Err(GpError::NotPositiveDefinite(id))
    }

    /// Zero-mean prior from a kernel.
    pub fn from_kernel(id: impl Into<String>, spec: &KernelSpec, arms: &ArmSet) -> Result<Self, GpError> {
        let cov = gram_matrix(spec, arms)?;
        let mut prior = Self::new(id, vec![0.0; arms.len()], cov)?;
        prior.kernel = Some(spec.clone());
        Ok(prior)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kernel(&self) -> Option<&KernelSpec> {
        self.kernel.as_ref()
    }

    pub fn num_arms(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// σ₀², the largest prior variance.
    pub fn max_variance(&self) -> f64 {
        self.cov.diagonal().max()
    }

    /// Covariance of the jittered prior that conditioning and sampling use.
    #[inline]
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let c = self.cov[(i, j)];
        if i == j {
            c + self.jitter
        } else {
            c
        }
    }

    /// Column `j` of the unjittered covariance.
    #[inline]
    pub(crate) fn cov_column(&self, j: usize) -> &[f64] {
        let n = self.num_arms();
        &self.cov.as_slice()[j * n..(j + 1) * n]
    }

    /// `mean + L z` for a caller-supplied standard normal vector `z`.
    pub fn transform_standard(&self, z: &[f64], out: &mut [f64]) {
        let n = self.num_arms();
        out.copy_from_slice(&self.mean);
        let l = self.chol.as_slice();
        for (j, &zj) in z.iter().enumerate().take(n) {
            let col = &l[j * n + j..(j + 1) * n];
            for (o, &lij) in out[j..].iter_mut().zip(col) {
                *o += lij * zj;
            }
        }
    }

    /// Exact draw of the function vector from the (jittered) prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut z = vec![0.0; self.num_arms()];
        fill_standard_normal(rng, &mut z);
        let mut out = vec![0.0; self.num_arms()];
        self.transform_standard(&z, &mut out);
        out
    }
}
