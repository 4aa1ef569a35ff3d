//! Empirical priors from bucketed sensor data.
//!
//! Each bucket (a day, an hour of the day, a month...) holds several complete
//! measurements of all arms. Its prior is the per-arm sample mean together
//! with the unbiased sample covariance plus a small ridge.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Deserialize;

use super::{Hyperprior, PriorError};
use crate::gp::MaterializedPrior;

/// Ridge, as a fraction of the mean diagonal, added to empirical covariances.
pub const DEFAULT_RIDGE: f64 = 1e-6;
/// Absolute ridge used when a bucket has no variance at all.
pub const RIDGE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct BucketRecord {
    pub bucket_id: String,
    pub sample_id: String,
    pub arm_id: usize,
    pub value: f64,
}

/// `log(v / 10 + 0.1)`, the rescaling used for daily precipitation.
pub fn log_rain_transform(v: f64) -> f64 {
    (v / 10.0 + 0.1).ln()
}

/// Complete measurements of `num_arms` arms grouped into buckets.
#[derive(Debug, Clone)]
pub struct BucketedDataset {
    num_arms: usize,
    /// `(bucket label, samples)`, buckets in order of first appearance, each
    /// sample a full vector over arms.
    buckets: Vec<(String, Vec<Vec<f64>>)>,
}

impl BucketedDataset {
    pub fn from_records(records: impl IntoIterator<Item = BucketRecord>) -> Result<Self, PriorError> {
        let mut bucket_order: Vec<String> = Vec::new();
        let mut samples: HashMap<String, Vec<(String, Vec<(usize, f64)>)>> = HashMap::new();
        let mut max_arm = None::<usize>;
        for r in records {
            max_arm = Some(max_arm.map_or(r.arm_id, |m| m.max(r.arm_id)));
            let bucket = samples.entry(r.bucket_id.clone()).or_insert_with(|| {
                bucket_order.push(r.bucket_id.clone());
                Vec::new()
            });
            match bucket.iter_mut().find(|(s, _)| *s == r.sample_id) {
                Some((_, vals)) => vals.push((r.arm_id, r.value)),
                None => bucket.push((r.sample_id.clone(), vec![(r.arm_id, r.value)])),
            }
        }
        let n = max_arm.map(|m| m + 1).ok_or_else(|| PriorError::Coverage("no records".into()))?;
        let mut buckets = Vec::with_capacity(bucket_order.len());
        for label in bucket_order {
            let raw = samples.remove(&label).unwrap_or_default();
            let mut full = Vec::with_capacity(raw.len());
            for (sample, vals) in raw {
                let mut v = vec![f64::NAN; n];
                for (arm, value) in vals {
                    if !v[arm].is_nan() {
                        return Err(PriorError::Coverage(format!(
                            "bucket `{label}` sample `{sample}` lists arm {arm} twice"
                        )));
                    }
                    v[arm] = value;
                }
                if let Some(missing) = v.iter().position(|x| x.is_nan()) {
                    return Err(PriorError::Coverage(format!(
                        "bucket `{label}` sample `{sample}` is missing arm {missing}"
                    )));
                }
                full.push(v);
            }
            buckets.push((label, full));
        }
        Ok(BucketedDataset { num_arms: n, buckets })
    }

    /// Reads `bucket_id,sample_id,arm_id,value` rows, optionally applying
    /// [`log_rain_transform`] to each value.
    pub fn from_reader<R: Read>(reader: R, log_transform: bool) -> Result<Self, PriorError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize() {
            let mut r: BucketRecord = row?;
            if log_transform {
                r.value = log_rain_transform(r.value);
            }
            records.push(r);
        }
        Self::from_records(records)
    }

    pub fn from_path(path: impl AsRef<Path>, log_transform: bool) -> Result<Self, PriorError> {
        Self::from_reader(std::fs::File::open(path)?, log_transform)
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn num_buckets(&self) -> usize {
        self.buckets.len()
    }

    pub fn bucket_labels(&self) -> Vec<&str> {
        self.buckets.iter().map(|(l, _)| l.as_str()).collect()
    }

    pub fn samples(&self, bucket: usize) -> &[Vec<f64>] {
        &self.buckets[bucket].1
    }

    /// Every measurement vector regardless of bucket, in file order.
    pub fn all_samples(&self) -> Vec<&[f64]> {
        self.buckets.iter().flat_map(|(_, s)| s.iter().map(Vec::as_slice)).collect()
    }
}

/// Per-arm mean and unbiased covariance of a set of full measurements.
fn mean_and_cov(samples: &[Vec<f64>], n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let m = samples.len() as f64;
    let mut mean = vec![0.0; n];
    for s in samples {
        for (a, v) in mean.iter_mut().zip(s) {
            *a += v / m;
        }
    }
    let mut cov = DMatrix::zeros(n, n);
    for s in samples {
        for j in 0..n {
            let dj = s[j] - mean[j];
            for i in j..n {
                cov[(i, j)] += (s[i] - mean[i]) * dj;
            }
        }
    }
    for j in 0..n {
        for i in j..n {
            let v = cov[(i, j)] / (m - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

/// One prior `GP(μ̂_p, Σ̂_p)` per bucket with uniform hyperprior weights.
pub fn empirical_prior_set(data: &BucketedDataset, ridge: f64) -> Result<Hyperprior, PriorError> {
    let n = data.num_arms;
    let mut priors = Vec::with_capacity(data.buckets.len());
    for (label, samples) in &data.buckets {
        if samples.len() < 2 {
            return Err(PriorError::TooFewSamples(label.clone()));
        }
        let (mean, mut cov) = mean_and_cov(samples, n);
        let mean_diag = cov.diagonal().sum() / n as f64;
        let added = if mean_diag > 0.0 { ridge * mean_diag } else { RIDGE_FLOOR };
        for i in 0..n {
            cov[(i, i)] += added;
        }
        priors.push(Arc::new(MaterializedPrior::new(label.clone(), mean, cov)?));
    }
    Hyperprior::uniform(priors)
}
