//! Run configuration: a TOML file of flat dotted keys plus `key=value`
//! overrides.
//!
//! ```toml
//! setup = "lengthscale-scaling"
//! num_priors = 8
//! seeds = 100
//! agents = ["hp-gp-ts", "pe-gp-ts"]
//! output.dir = "runs/ls8"
//! ```
//!
//! Nested tables are flattened, so `[output]` followed by `dir = ...` is the
//! same as `output.dir = ...`. Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentKind;
use crate::environment::{BucketedSource, ExperimentConfig, Setup};
use crate::kernels::KernelSpec;
use crate::priors::DEFAULT_RIDGE;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Toml(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub const KEYS: [&str; 17] = [
    "setup",
    "horizon",
    "num_arms",
    "num_priors",
    "delta",
    "noise_var",
    "seeds",
    "seed_base",
    "workers",
    "agents",
    "kernels",
    "lengthscales",
    "output.dir",
    "bucketed.prior_csv",
    "bucketed.test_csv",
    "bucketed.log_transform",
    "bucketed.ridge",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub output_dir: PathBuf,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), message: message.into() }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize, ConfigError> {
    v.as_integer()
        .filter(|i| *i >= 0)
        .map(|i| i as usize)
        .ok_or_else(|| bad(key, "expected a nonnegative integer"))
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64, ConfigError> {
    v.as_float()
        .or_else(|| v.as_integer().map(|i| i as f64))
        .ok_or_else(|| bad(key, "expected a number"))
}

fn as_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| bad(key, "expected a string"))
}

fn as_list<'a>(key: &str, v: &'a toml::Value) -> Result<Vec<&'a toml::Value>, ConfigError> {
    match v {
        toml::Value::Array(a) => Ok(a.iter().collect()),
        _ => Err(bad(key, "expected an array")),
    }
}

fn string_list(key: &str, v: &toml::Value) -> Result<Vec<String>, ConfigError> {
    if let Some(s) = v.as_str() {
        return Ok(s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect());
    }
    as_list(key, v)?.into_iter().map(|x| as_str(key, x).map(str::to_string)).collect()
}

/// Partially filled bucketed source while keys arrive in arbitrary order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct BucketedDraft {
    prior_csv: Option<PathBuf>,
    test_csv: Option<PathBuf>,
    log_transform: bool,
    ridge: Option<f64>,
}

/// Builder that accepts keys in any order and resolves defaults at the end.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    entries: Vec<(String, toml::Value)>,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Toml(e.to_string()))?;
        let mut b = Self::new();
        flatten("", &table, &mut b.entries);
        Ok(b)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: toml::Value) -> &mut Self {
        self.entries.retain(|(k, _)| k != key);
        self.entries.push((key.to_string(), value));
        self
    }

    /// Applies `key=value`. The value is read as a TOML value when possible
    /// and as a bare string otherwise.
    pub fn set_override(&mut self, assignment: &str) -> Result<&mut Self, ConfigError> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::BadOverride(assignment.into()))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        Ok(self.set(key, value))
    }

    pub fn build(&self) -> Result<RunConfig, ConfigError> {
        for (k, _) in &self.entries {
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
        }
        let get = |key: &str| self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v);
        let setup: Setup = match get("setup") {
            Some(v) => as_str("setup", v)?.parse().map_err(|e| bad("setup", format!("{e}")))?,
            None => return Err(bad("setup", "missing")),
        };
        let mut cfg = ExperimentConfig::new(setup);
        let mut bucket = BucketedDraft::default();
        let mut output_dir = PathBuf::from("out");
        for (key, v) in &self.entries {
            let key = key.as_str();
            match key {
                "setup" => {}
                "horizon" => cfg.horizon = as_usize(key, v)?,
                "num_arms" => cfg.num_arms = as_usize(key, v)?,
                "num_priors" => cfg.num_priors = Some(as_usize(key, v)?),
                "delta" => cfg.delta = as_f64(key, v)?,
                "noise_var" => cfg.noise_var = as_f64(key, v)?,
                "seeds" => cfg.seeds = as_usize(key, v)?,
                "seed_base" => cfg.seed_base = as_usize(key, v)? as u64,
                "workers" => cfg.workers = as_usize(key, v)?,
                "agents" => {
                    cfg.agents = string_list(key, v)?
                        .iter()
                        .map(|s| s.parse::<AgentKind>().map_err(|e| bad(key, e.to_string())))
                        .collect::<Result<_, _>>()?
                }
                "kernels" => {
                    cfg.kernels = Some(
                        as_list(key, v)?
                            .into_iter()
                            .map(|x| {
                                as_str(key, x)?.parse::<KernelSpec>().map_err(|e| bad(key, e.to_string()))
                            })
                            .collect::<Result<_, _>>()?,
                    )
                }
                "lengthscales" => {
                    cfg.lengthscales =
                        Some(as_list(key, v)?.into_iter().map(|x| as_f64(key, x)).collect::<Result<_, _>>()?)
                }
                "output.dir" => output_dir = PathBuf::from(as_str(key, v)?),
                "bucketed.prior_csv" => bucket.prior_csv = Some(PathBuf::from(as_str(key, v)?)),
                "bucketed.test_csv" => bucket.test_csv = Some(PathBuf::from(as_str(key, v)?)),
                "bucketed.log_transform" => {
                    bucket.log_transform = v.as_bool().ok_or_else(|| bad(key, "expected true or false"))?
                }
                "bucketed.ridge" => bucket.ridge = Some(as_f64(key, v)?),
                _ => unreachable!("keys checked above"),
            }
        }
        if bucket != BucketedDraft::default() {
            cfg.bucketed = Some(BucketedSource {
                prior_csv: bucket.prior_csv.ok_or_else(|| bad("bucketed.prior_csv", "missing"))?,
                test_csv: bucket.test_csv.ok_or_else(|| bad("bucketed.test_csv", "missing"))?,
                log_transform: bucket.log_transform,
                ridge: bucket.ridge.unwrap_or(DEFAULT_RIDGE),
            });
        }
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(RunConfig { experiment: cfg, output_dir })
    }
}
