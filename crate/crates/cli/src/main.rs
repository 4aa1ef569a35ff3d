use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use prior_bandits::config::{ConfigBuilder, RunConfig};
use prior_bandits::environment::{prior_set, run_experiment, Setup};
use prior_bandits::metrics::MigTable;
use prior_bandits::output::{aggregate, read_trace, write_json, write_run, SCHEMA_VERSION, SUMMARY_FILE};
use prior_bandits::verify::{run_suite, Suite, VerifyOptions};

#[derive(Parser)]
#[command(name = "prior-bandits", version, about = "GP bandits with an unknown prior: experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write trace.csv, summary.json and config.echo.json.
    Run(RunArgs),
    /// Run one verification suite and print its JSON report.
    Verify(VerifyArgs),
    /// Greedy maximum-information-gain estimates for each prior.
    Mig(MigArgs),
    /// Pool one or more trace.csv files into a single summary.
    Report(ReportArgs),
}

/// Settings shared by `run` and `mig`; each flag overrides the config file.
#[derive(Args)]
struct ExperimentArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    setup: Option<String>,
    /// Horizon.
    #[arg(long = "T")]
    horizon: Option<usize>,
    /// Number of arms.
    #[arg(long = "n")]
    num_arms: Option<usize>,
    /// Prior-set size for the scaling and subspace setups.
    #[arg(long = "P")]
    num_priors: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(long)]
    seed_base: Option<u64>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated agent roster, e.g. `hp-gp-ts,pe-gp-ucb`.
    #[arg(long)]
    agents: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// One of lemma1, lemma3, theorem4, gp-oracle, elimination-safety.
    suite: String,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    setup: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MigArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Write the table as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// trace.csv files to pool.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Output summary path.
    #[arg(long)]
    out: PathBuf,
}

fn toml_str(s: &str) -> toml::Value {
    toml::Value::String(s.to_string())
}

fn int(v: impl TryInto<i64>) -> Result<toml::Value> {
    Ok(toml::Value::Integer(v.try_into().map_err(|_| anyhow::anyhow!("value out of range"))?))
}

fn builder(args: &ExperimentArgs) -> Result<ConfigBuilder> {
    let mut b = match &args.config {
        Some(path) => ConfigBuilder::from_path(path).with_context(|| format!("reading {}", path.display()))?,
        None => ConfigBuilder::new(),
    };
    if let Some(s) = &args.setup {
        b.set("setup", toml_str(s));
    }
    if let Some(v) = args.horizon {
        b.set("horizon", int(v)?);
    }
    if let Some(v) = args.num_arms {
        b.set("num_arms", int(v)?);
    }
    if let Some(v) = args.num_priors {
        b.set("num_priors", int(v)?);
    }
    if let Some(v) = args.delta {
        b.set("delta", toml::Value::Float(v));
    }
    if let Some(v) = args.noise_var {
        b.set("noise_var", toml::Value::Float(v));
    }
    if let Some(v) = args.seed_base {
        b.set("seed_base", int(v)?);
    }
    Ok(b)
}

fn apply_overrides(b: &mut ConfigBuilder, set: &[String]) -> Result<RunConfig> {
    for s in set {
        b.set_override(s)?;
    }
    Ok(b.build()?)
}

fn cmd_run(args: RunArgs) -> Result<bool> {
    let mut b = builder(&args.experiment)?;
    if let Some(v) = args.seeds {
        b.set("seeds", int(v)?);
    }
    if let Some(v) = args.workers {
        b.set("workers", int(v)?);
    }
    if let Some(v) = &args.agents {
        b.set("agents", toml_str(v));
    }
    if let Some(v) = &args.out {
        b.set("output.dir", toml_str(&v.to_string_lossy()));
    }
    let config = apply_overrides(&mut b, &args.experiment.set)?;
    let result = run_experiment(&config.experiment)?;
    let summary = write_run(&config, &result)?;
    for a in &summary.agents {
        println!(
            "{:<12} final regret {:>9.2} ± {:>6.2}  ({} episodes, {} aborted)",
            a.agent.name(),
            a.regret.final_mean,
            a.regret.final_se,
            a.regret.episodes,
            a.regret.aborted
        );
    }
    println!("wrote {}", config.output_dir.display());
    if summary.aborted_episodes > 0 {
        eprintln!("{} episode(s) aborted after eliminating every prior", summary.aborted_episodes);
        return Ok(false);
    }
    Ok(true)
}

fn cmd_verify(args: VerifyArgs) -> Result<bool> {
    let suite: Suite = args.suite.parse()?;
    let setup = args.setup.as_deref().map(str::parse::<Setup>).transpose()?;
    let options = VerifyOptions { seeds: args.seeds, seed_base: args.seed_base, setup, workers: args.workers };
    let outcome = run_suite(suite, &options)?;
    println!("{}", serde_json::to_string_pretty(&outcome)?);
    if let Some(path) = &args.out {
        write_json(path, &outcome)?;
    }
    Ok(outcome.passed)
}

fn cmd_mig(args: MigArgs) -> Result<bool> {
    let mut b = builder(&args.experiment)?;
    let config = apply_overrides(&mut b, &args.experiment.set)?;
    let exp = &config.experiment;
    let h = prior_set(exp, exp.seed_base)?;
    let table = MigTable::compute(&h, exp.horizon, exp.noise_var)?;
    for row in &table.rows {
        println!("{:<20} {:>10.4}  (upper {:>10.4})", row.prior, row.value, row.upper);
    }
    println!("{:<20} {:>10.4}", "gamma_hat", table.gamma_hat);
    println!("{:<20} {:>10.4}", "gamma_bar", table.gamma_bar);
    if let Some(path) = &args.out {
        write_json(path, &table)?;
    }
    Ok(true)
}

/// Prior labels from a `summary.json` next to the trace, if there is one.
fn sibling_prior_ids(trace: &Path) -> Result<Vec<String>> {
    let path = trace.with_file_name(SUMMARY_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let version = value.get("schema_version").and_then(|v| v.as_u64());
    if version != Some(u64::from(SCHEMA_VERSION)) {
        bail!("{}: unsupported schema version {:?}", path.display(), version);
    }
    Ok(serde_json::from_value(value.get("prior_ids").cloned().unwrap_or_default()).unwrap_or_default())
}

fn cmd_report(args: ReportArgs) -> Result<bool> {
    let mut traces = Vec::new();
    let mut ids: Option<Vec<String>> = None;
    for path in &args.input {
        let found = sibling_prior_ids(path)?;
        match &ids {
            Some(prev) if !found.is_empty() && !prev.is_empty() && *prev != found => {
                bail!("{} uses a different prior set from the other inputs", path.display())
            }
            Some(prev) if !prev.is_empty() => {}
            _ => ids = Some(found),
        }
        traces.push((path.clone(), read_trace(path)?));
    }
    let summary = aggregate(&traces, &ids.unwrap_or_default())?;
    write_json(&args.out, &summary)?;
    println!("pooled {} trace(s) into {}", traces.len(), args.out.display());
    Ok(summary.aborted_episodes == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Mig(a) => cmd_mig(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

