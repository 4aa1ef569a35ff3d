//! On-disk formats: `trace.csv`, `summary.json` and `config.echo.json`.
//!
//! `trace.csv` is long format, one row per `(seed, agent, t)` in that order,
//! with `t` starting at 1. `prior` and `true_prior` are indices into
//! `prior_ids` of the summary; optional fields are left empty.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentKind;
use crate::config::RunConfig;
use crate::environment::{EpisodeRecord, ExperimentResult, StepRecord};
use crate::metrics::{bound_report, summarize, AgentSummary, BoundReport, MetricsError};

pub const SCHEMA_VERSION: u32 = 1;

pub const TRACE_COLUMNS: [&str; 11] = [
    "seed",
    "agent",
    "t",
    "arm",
    "prior",
    "reward",
    "instant_regret",
    "cum_regret",
    "active_priors",
    "entropy",
    "true_prior",
];

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_ECHO_FILE: &str = "config.echo.json";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: unexpected header, expected {expected}")]
    Header { path: PathBuf, expected: String },
    #[error("{path}: row {row}: {message}")]
    Row { path: PathBuf, row: usize, message: String },
    #[error("{path}: horizon {horizon} differs from the other traces")]
    HorizonMismatch { path: PathBuf, horizon: usize },
    #[error("schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    Version { found: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub seed: u64,
    pub agent: AgentKind,
    pub t: usize,
    pub arm: usize,
    pub prior: Option<usize>,
    pub reward: f64,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub active_priors: Option<usize>,
    pub entropy: Option<f64>,
    pub true_prior: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub setup: String,
    pub prior_ids: Vec<String>,
    pub num_arms: usize,
    pub horizon: usize,
    pub seeds: usize,
    pub aborted_episodes: usize,
    pub agents: Vec<AgentSummary>,
    /// Absent when aggregated from traces alone.
    pub bounds: Option<BoundReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub schema_version: u32,
    #[serde(flatten)]
    pub config: RunConfig,
}

pub fn trace_rows(records: &[EpisodeRecord]) -> impl Iterator<Item = TraceRow> + '_ {
    records.iter().flat_map(|r| {
        let mut cum = 0.0;
        r.steps.iter().enumerate().map(move |(i, s)| {
            cum += s.instant_regret;
            TraceRow {
                seed: r.seed,
                agent: r.agent,
                t: i + 1,
                arm: s.arm,
                prior: s.prior,
                reward: s.reward,
                instant_regret: s.instant_regret,
                cum_regret: cum,
                active_priors: s.active_priors,
                entropy: s.entropy,
                true_prior: r.true_prior,
            }
        })
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

/// Writes through a sibling temporary file so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn trace_csv(records: &[EpisodeRecord]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(TRACE_COLUMNS)?;
    for row in trace_rows(records) {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn write_trace(path: &Path, records: &[EpisodeRecord]) -> Result<(), OutputError> {
    let bytes = trace_csv(records).map_err(|source| OutputError::Csv { path: path.to_path_buf(), source })?;
    write_atomic(path, &bytes)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn summary_of(result: &ExperimentResult) -> Result<Summary, OutputError> {
    let agents = summarize(&result.records, result.prior_ids.len())?;
    let bounds = bound_report(result, &agents)?;
    Ok(Summary {
        schema_version: SCHEMA_VERSION,
        setup: result.config.setup.to_string(),
        prior_ids: result.prior_ids.clone(),
        num_arms: result.num_arms,
        horizon: result.config.horizon,
        seeds: result.config.seeds,
        aborted_episodes: result.aborted(),
        agents,
        bounds: Some(bounds),
    })
}

/// Writes all three files into `config.output_dir`, creating it if needed.
pub fn write_run(config: &RunConfig, result: &ExperimentResult) -> Result<Summary, OutputError> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let summary = summary_of(result)?;
    write_trace(&dir.join(TRACE_FILE), &result.records)?;
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    write_json(&dir.join(CONFIG_ECHO_FILE), &ConfigEcho { schema_version: SCHEMA_VERSION, config: config.clone() })?;
    Ok(summary)
}

/// Parses a trace, checking the header exactly.
pub fn read_trace_rows<R: Read>(reader: R, path: &Path) -> Result<Vec<TraceRow>, OutputError> {
    let csv_err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(OutputError::Header { path: path.to_path_buf(), expected: TRACE_COLUMNS.join(",") });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| OutputError::Row { path: path.to_path_buf(), row: i + 1, message: e.to_string() }))
        .collect()
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>, OutputError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_trace_rows(std::io::BufReader::new(f), path)
}

pub fn read_summary(path: &Path) -> Result<Summary, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(OutputError::Version { found });
    }
    Ok(serde_json::from_value(value)?)
}

/// Regroups rows into episodes. Rows of one episode must be contiguous with
/// `t = 1, 2, ...`; an episode shorter than the longest one is marked aborted.
pub fn episodes_from_rows(rows: &[TraceRow], setup: &str, path: &Path) -> Result<Vec<EpisodeRecord>, OutputError> {
    let mut out: Vec<EpisodeRecord> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let same = out.last().is_some_and(|e| e.seed == row.seed && e.agent == row.agent);
        if !same {
            out.push(EpisodeRecord {
                seed: row.seed,
                agent: row.agent,
                setup: setup.to_string(),
                true_prior: row.true_prior,
                steps: Vec::new(),
                aborted: false,
                true_prior_eliminated: false,
            });
        }
        let ep = out.last_mut().expect("pushed above");
        if row.t != ep.steps.len() + 1 {
            return Err(OutputError::Row {
                path: path.to_path_buf(),
                row: i + 1,
                message: format!("expected t = {}, found {}", ep.steps.len() + 1, row.t),
            });
        }
        ep.steps.push(StepRecord {
            arm: row.arm,
            prior: row.prior,
            reward: row.reward,
            instant_regret: row.instant_regret,
            active_priors: row.active_priors,
            entropy: row.entropy,
            sigma2_star: None,
        });
    }
    let horizon = out.iter().map(|e| e.steps.len()).max().unwrap_or(0);
    for e in &mut out {
        e.aborted = e.steps.len() < horizon;
    }
    Ok(out)
}

/// Pools several traces into one summary. `prior_ids` labels the prior indices;
/// when empty, indices are used as labels.
pub fn aggregate(traces: &[(PathBuf, Vec<TraceRow>)], prior_ids: &[String]) -> Result<Summary, OutputError> {
    let mut records = Vec::new();
    let mut horizon = None;
    for (path, rows) in traces {
        let eps = episodes_from_rows(rows, "", path)?;
        let h = eps.iter().map(|e| e.steps.len()).max().unwrap_or(0);
        if *horizon.get_or_insert(h) != h {
            return Err(OutputError::HorizonMismatch { path: path.clone(), horizon: h });
        }
        records.extend(eps);
    }
    let max_index = records
        .iter()
        .flat_map(|r| r.steps.iter().filter_map(|s| s.prior).chain(r.true_prior))
        .max()
        .map_or(0, |m| m + 1);
    let ids: Vec<String> = if prior_ids.is_empty() {
        (0..max_index).map(|i| i.to_string()).collect()
    } else {
        prior_ids.to_vec()
    };
    let agents = summarize(&records, ids.len().max(max_index))?;
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    Ok(Summary {
        schema_version: SCHEMA_VERSION,
        setup: String::new(),
        prior_ids: ids,
        num_arms: records.iter().flat_map(|r| r.steps.iter().map(|s| s.arm + 1)).max().unwrap_or(0),
        horizon: records.iter().map(|e| e.steps.len()).max().unwrap_or(0),
        seeds: seeds.len(),
        aborted_episodes: records.iter().filter(|r| r.aborted).count(),
        agents,
        bounds: None,
    })
}
