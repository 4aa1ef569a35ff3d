//! Covariance functions over finite arm sets.
//!
//! Six families are supported. Conventions differ from the usual textbook
//! forms in two places:
//!
//! * RBF is `exp(-r² / ℓ²)`, with no factor ½ in the exponent.
//! * Periodic is `exp(-½ Σᵢ sin²(π (xᵢ - x̃ᵢ) / ρ) / ℓ)`, dividing by `ℓ` rather
//!   than `ℓ²`.
//!
//! Every stationary family evaluates to exactly 1 at zero distance. The linear
//! kernel `v · xᵀx̃` is scaled through its variance instead.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("parameter `{name}` must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("active dimension {index} out of range for {dim}-dimensional arms")]
    ActiveDimOutOfRange { index: usize, dim: usize },
    #[error("active dimension {0} listed twice")]
    DuplicateActiveDim(usize),
    #[error("unsupported Matérn smoothness ν = {0} (only 1.5 and 2.5)")]
    UnsupportedNu(f64),
    #[error("cannot parse kernel spec `{0}`")]
    Parse(String),
}

/// Kernel family with its family-specific parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    RationalQuadratic { alpha: f64 },
    Matern32,
    Matern52,
    Periodic { period: f64 },
    Linear { variance: f64 },
}

impl KernelKind {
    pub fn is_stationary(&self) -> bool {
        !matches!(self, KernelKind::Linear { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub lengthscale: f64,
    /// Zero-based coordinates the kernel looks at. Empty means all of them.
    #[serde(default)]
    pub active_dims: Vec<usize>,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, lengthscale: f64) -> Result<Self, KernelError> {
        Self::with_active_dims(kind, lengthscale, Vec::new())
    }

    pub fn with_active_dims(
        kind: KernelKind,
        lengthscale: f64,
        active_dims: Vec<usize>,
    ) -> Result<Self, KernelError> {
        let spec = KernelSpec { kind, lengthscale, active_dims };
        spec.validate()?;
        Ok(spec)
    }

    pub fn rbf(lengthscale: f64) -> Result<Self, KernelError> {
        Self::new(KernelKind::Rbf, lengthscale)
    }

    /// Checks scale parameters and that `active_dims` has no repeats.
    /// Range checks against the arm dimension happen at evaluation time.
    pub fn validate(&self) -> Result<(), KernelError> {
        positive("lengthscale", self.lengthscale)?;
        match self.kind {
            KernelKind::RationalQuadratic { alpha } => positive("alpha", alpha)?,
            KernelKind::Periodic { period } => positive("period", period)?,
            KernelKind::Linear { variance } => positive("variance", variance)?,
            KernelKind::Rbf | KernelKind::Matern32 | KernelKind::Matern52 => {}
        }
        for (i, d) in self.active_dims.iter().enumerate() {
            if self.active_dims[..i].contains(d) {
                return Err(KernelError::DuplicateActiveDim(*d));
            }
        }
        Ok(())
    }

    fn check_dims(&self, dim: usize) -> Result<(), KernelError> {
        match self.active_dims.iter().find(|&&d| d >= dim) {
            Some(&index) => Err(KernelError::ActiveDimOutOfRange { index, dim }),
            None => Ok(()),
        }
    }

    /// Evaluates `k(x, x̃)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, KernelError> {
        if x.len() != y.len() {
            return Err(KernelError::DimensionMismatch(x.len(), y.len()));
        }
        self.validate()?;
        self.check_dims(x.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let l = self.lengthscale;
        match self.kind {
            KernelKind::Rbf => (-self.sq_dist(x, y) / (l * l)).exp(),
            KernelKind::RationalQuadratic { alpha } => {
                (1.0 + self.sq_dist(x, y) / (2.0 * alpha * l * l)).powf(-alpha)
            }
            KernelKind::Matern32 => {
                let s = 3f64.sqrt() * self.sq_dist(x, y).sqrt() / l;
                (1.0 + s) * (-s).exp()
            }
            KernelKind::Matern52 => {
                let s = 5f64.sqrt() * self.sq_dist(x, y).sqrt() / l;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
            KernelKind::Periodic { period } => {
                let sum: f64 = self
                    .coords(x, y)
                    .map(|(a, b)| (PI / period * (a - b)).sin().powi(2))
                    .sum();
                (-0.5 * sum / l).exp()
            }
            KernelKind::Linear { variance } => {
                variance * self.coords(x, y).map(|(a, b)| a * b).sum::<f64>()
            }
        }
    }

    fn coords<'a>(&'a self, x: &'a [f64], y: &'a [f64]) -> Box<dyn Iterator<Item = (f64, f64)> + 'a> {
        if self.active_dims.is_empty() {
            Box::new(x.iter().copied().zip(y.iter().copied()))
        } else {
            Box::new(self.active_dims.iter().map(move |&d| (x[d], y[d])))
        }
    }

    fn sq_dist(&self, x: &[f64], y: &[f64]) -> f64 {
        self.coords(x, y).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), KernelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(KernelError::NonPositive { name, value })
    }
}

/// A finite set of arms, one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSet {
    points: Vec<Vec<f64>>,
}

impl ArmSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, KernelError> {
        let dim = points.first().map_or(0, Vec::len);
        if let Some(bad) = points.iter().find(|p| p.len() != dim) {
            return Err(KernelError::DimensionMismatch(dim, bad.len()));
        }
        Ok(ArmSet { points })
    }

    /// `n` equispaced one-dimensional arms on `[lo, hi]`.
    pub fn equispaced(n: usize, lo: f64, hi: f64) -> Self {
        let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        ArmSet { points: (0..n).map(|i| vec![lo + step * i as f64]).collect() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// Builds the symmetric `n × n` matrix `K[i, j] = k(xᵢ, xⱼ)`.
pub fn gram_matrix(spec: &KernelSpec, arms: &ArmSet) -> Result<DMatrix<f64>, KernelError> {
    spec.validate()?;
    spec.check_dims(arms.dim())?;
    let n = arms.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = spec.eval_unchecked(arms.point(i), arms.point(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            KernelKind::Rbf => write!(f, "rbf(lengthscale={})", self.lengthscale)?,
            KernelKind::RationalQuadratic { alpha } => {
                write!(f, "rq(lengthscale={}, alpha={alpha})", self.lengthscale)?
            }
            KernelKind::Matern32 => write!(f, "matern(lengthscale={}, nu=1.5)", self.lengthscale)?,
            KernelKind::Matern52 => write!(f, "matern(lengthscale={}, nu=2.5)", self.lengthscale)?,
            KernelKind::Periodic { period } => {
                write!(f, "periodic(lengthscale={}, period={period})", self.lengthscale)?
            }
            KernelKind::Linear { variance } => write!(f, "linear(variance={variance})")?,
        }
        if !self.active_dims.is_empty() {
            let dims: Vec<String> = self.active_dims.iter().map(|d| d.to_string()).collect();
            write!(f, "[{}]", dims.join(","))?;
        }
        Ok(())
    }
}

/// Parses specs of the form `family(key=value, ...)`, optionally followed by
/// `[d0,d1,...]` active dimensions, e.g. `matern(lengthscale=1, nu=1.5)`.
impl FromStr for KernelSpec {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || KernelError::Parse(s.to_string());
        let s = s.trim();
        let open = s.find('(').ok_or_else(err)?;
        let close = s.rfind(')').ok_or_else(err)?;
        if close < open {
            return Err(err());
        }
        let family = s[..open].trim().to_ascii_lowercase();
        let mut lengthscale = 1.0;
        let mut alpha = None;
        let mut period = None;
        let mut variance = None;
        let mut nu = None;
        for part in s[open + 1..close].split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(err)?;
            let value: f64 = value.trim().parse().map_err(|_| err())?;
            match key.trim() {
                "lengthscale" | "l" => lengthscale = value,
                "alpha" => alpha = Some(value),
                "period" | "rho" => period = Some(value),
                "variance" | "v" => variance = Some(value),
                "nu" => nu = Some(value),
                _ => return Err(err()),
            }
        }
        let kind = match family.as_str() {
            "rbf" => KernelKind::Rbf,
            "rq" | "rational_quadratic" => KernelKind::RationalQuadratic { alpha: alpha.ok_or_else(err)? },
            "matern" => match nu.ok_or_else(err)? {
                v if v == 1.5 => KernelKind::Matern32,
                v if v == 2.5 => KernelKind::Matern52,
                v => return Err(KernelError::UnsupportedNu(v)),
            },
            "matern32" => KernelKind::Matern32,
            "matern52" => KernelKind::Matern52,
            "periodic" => KernelKind::Periodic { period: period.ok_or_else(err)? },
            "linear" => KernelKind::Linear { variance: variance.ok_or_else(err)? },
            _ => return Err(err()),
        };
        let rest = s[close + 1..].trim();
        let active_dims = if rest.is_empty() {
            Vec::new()
        } else {
            let inner = rest.strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(err)?;
            inner
                .split(',')
                .map(|d| d.trim().parse::<usize>().map_err(|_| err()))
                .collect::<Result<_, _>>()?
        };
        KernelSpec::with_active_dims(kind, lengthscale, active_dims)
    }
}
