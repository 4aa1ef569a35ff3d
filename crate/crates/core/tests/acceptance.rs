//! Acceptance suite at reporting scale (100 seeds per experiment).
//!
//! Prints one PASS/FAIL line per criterion and exits nonzero if any fail.
//! Takes roughly half an hour on a single core.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use prior_bandits::agents::AgentKind;
use prior_bandits::config::RunConfig;
use prior_bandits::environment::{run_experiment, BucketedSource, ExperimentConfig, ExperimentResult, Setup};
use prior_bandits::metrics::{log_log_slope, summarize, AgentSummary};
use prior_bandits::output::{write_run, SUMMARY_FILE, TRACE_FILE};
use prior_bandits::verify::{
    elimination_safety, elimination_safety_config, gp_oracle, lemma1, lemma3, theorem4, violation_threshold,
};

const SEEDS: usize = 100;

use AgentKind::{HpGpTs as Hp, MapGpTs as Map, OracleGpTs as OTs, OracleGpUcb as OUcb, PeGpTs as PeTs, PeGpUcb as PeUcb};

/// Reference (mean, SE) at 500 seeds, lengthscale setup with |P| = 8.
const LENGTHSCALE_8: [(AgentKind, f64, f64); 6] =
    [(Map, 30.2, 1.2), (Hp, 31.4, 1.0), (PeTs, 61.8, 0.5), (PeUcb, 114.2, 0.6), (OTs, 28.1, 0.8), (OUcb, 48.3, 1.2)];

const SUBSPACE_SIZES: [usize; 4] = [5, 8, 12, 16];

/// Reference (mean, SE) per agent for each entry of `SUBSPACE_SIZES`.
const SUBSPACE: [(AgentKind, [(f64, f64); 4]); 6] = [
    (Map, [(87.2, 1.0), (89.9, 1.1), (89.1, 0.9), (90.9, 1.2)]),
    (Hp, [(88.3, 0.9), (88.8, 0.9), (89.5, 0.9), (90.8, 0.9)]),
    (PeTs, [(177.1, 1.4), (269.5, 1.9), (344.7, 2.3), (396.9, 2.5)]),
    (PeUcb, [(389.0, 1.5), (526.0, 1.8), (622.4, 2.3), (688.0, 2.7)]),
    (OTs, [(86.0, 1.0), (84.1, 0.9), (84.6, 1.0), (84.8, 1.0)]),
    (OUcb, [(217.3, 1.0), (218.2, 1.0), (218.6, 1.0), (218.9, 0.9)]),
];

struct Run {
    result: ExperimentResult,
    summaries: Vec<AgentSummary>,
}

impl Run {
    fn new(cfg: ExperimentConfig) -> Run {
        let result = run_experiment(&cfg).expect("experiment runs");
        let summaries = summarize(&result.records, result.prior_ids.len()).expect("summary");
        Run { result, summaries }
    }

    fn agent(&self, kind: AgentKind) -> &AgentSummary {
        self.summaries.iter().find(|s| s.agent == kind).expect("agent in roster")
    }

    fn final_regret(&self, kind: AgentKind) -> (f64, f64) {
        let r = &self.agent(kind).regret;
        (r.final_mean, r.final_se)
    }

    fn prior_index(&self, id: &str) -> usize {
        self.result.prior_ids.iter().position(|p| p == id).expect("prior id")
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn config(setup: Setup, num_priors: Option<usize>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(setup);
    cfg.seeds = SEEDS;
    cfg.num_priors = num_priors.or(cfg.num_priors);
    cfg.workers = workers();
    cfg
}

fn within_pooled(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() <= 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt()
}

fn fmt_regret(kind: AgentKind, (m, se): (f64, f64)) -> String {
    format!("{}={m:.1}±{se:.1}", kind.name())
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, name: &str, passed: bool, detail: String, started: Instant) {
        if !passed {
            self.failures += 1;
        }
        let status = if passed { "PASS" } else { "FAIL" };
        println!("{status}  {name:<28} {detail}  [{:.0}s]", started.elapsed().as_secs_f64());
    }
}

fn lengthscale(report: &mut Report) {
    let started = Instant::now();
    let run = Run::new(config(Setup::Lengthscale, None));
    let r = |k| run.final_regret(k);
    let similar = within_pooled(r(Hp), r(Map)) && within_pooled(r(Hp), r(OTs)) && within_pooled(r(Map), r(OTs));
    let top = r(Hp).0.max(r(Map).0).max(r(OTs).0);
    let ordered = top < r(OUcb).0 && r(OUcb).0 < r(PeTs).0 && r(PeTs).0 < r(PeUcb).0;
    let pe_ucb = r(PeUcb).0;
    let in_band = (pe_ucb - 116.5).abs() <= 0.2 * 116.5;
    let detail = [Hp, Map, OTs, OUcb, PeTs, PeUcb].map(|k| fmt_regret(k, r(k))).join(" ");
    report.line(
        "lengthscale",
        similar && ordered && in_band,
        format!("similar={similar} ordered={ordered} pe-ucb-in-116.5±20%={in_band} {detail}"),
        started,
    );
}

fn lengthscale_scaling(report: &mut Report) {
    let started = Instant::now();
    let run = Run::new(config(Setup::LengthscaleScaling, Some(8)));
    let mut passed = true;
    let mut detail = String::new();
    for (kind, mean, se) in LENGTHSCALE_8 {
        let ours = run.final_regret(kind);
        let ok = within_pooled(ours, (mean, se));
        passed &= ok;
        write!(detail, "{}{} vs {mean} ", if ok { "" } else { "!" }, fmt_regret(kind, ours)).unwrap();
    }
    report.line("lengthscale-scaling-8", passed, detail, started);
}

fn kernel(report: &mut Report) {
    let started = Instant::now();
    let run = Run::new(config(Setup::Kernel, None));
    let accuracy = |k| run.agent(k).selection.as_ref().expect("selection stats").accuracy * 100.0;
    let targets = [(Hp, 63.2), (Map, 62.5), (PeTs, 17.0), (PeUcb, 17.0)];
    let acc_ok = targets.iter().all(|&(k, target)| (accuracy(k) - target).abs() <= 10.0);
    let detail = targets.map(|(k, t)| format!("{}={:.1}% (target {t})", k.name(), accuracy(k))).join(" ");
    report.line("kernel-accuracy", acc_ok, detail, started);

    let m32 = run.prior_index("matern32");
    let share = run.agent(PeUcb).selection.as_ref().unwrap().selection_share[m32] * 100.0;
    report.line("kernel-pe-ucb-matern32-share", share > 80.0, format!("share={share:.1}% (> 80)"), started);

    let started = Instant::now();
    let check = theorem4(&run.result).expect("hp-gp-ts in roster");
    report.line(
        "theorem4",
        check.passed,
        format!("min slack={:.2} at t={} rhs(T)={:.1}", check.min_slack, check.worst_step, check.rhs_final),
        started,
    );
}

fn subspace_scaling(report: &mut Report) {
    let started = Instant::now();
    let runs: Vec<Run> = SUBSPACE_SIZES.iter().map(|&p| Run::new(config(Setup::SubspaceScaling, Some(p)))).collect();
    let sizes = SUBSPACE_SIZES.map(|p| p as f64);
    let slope = |k| log_log_slope(&sizes, &runs.iter().map(|r| r.final_regret(k).0).collect::<Vec<_>>());

    let mut passed = true;
    let mut detail = String::new();
    for k in [PeTs, PeUcb] {
        let s = slope(k);
        passed &= (s - 0.5).abs() <= 0.2;
        write!(detail, "{}={s:.3} ", k.name()).unwrap();
    }
    for k in [Hp, Map] {
        let s = slope(k);
        passed &= s.abs() <= 0.1;
        write!(detail, "{}={s:.3} ", k.name()).unwrap();
    }
    report.line("subspace-scaling-slopes", passed, detail, started);

    let mut passed = true;
    let mut misses = Vec::new();
    for (kind, refs) in SUBSPACE {
        for ((run, p), reference) in runs.iter().zip(SUBSPACE_SIZES).zip(refs) {
            let ours = run.final_regret(kind);
            if !within_pooled(ours, reference) {
                passed = false;
                misses.push(format!("|P|={p} {} vs {}", fmt_regret(kind, ours), reference.0));
            }
        }
    }
    let detail = if misses.is_empty() { "24/24 within 3 pooled SE".into() } else {
        format!("{}/24 within 3 pooled SE; {}", 24 - misses.len(), misses.join(", "))
    };
    report.line("subspace-scaling-values", passed, detail, started);
}

fn gp_oracle_suite(report: &mut Report) {
    let started = Instant::now();
    let r = gp_oracle::run(&gp_oracle::GpOracleParams::default()).expect("gp-oracle runs");
    let passed = r.passed && r.equivalent_cases == 200 && r.moment_passes == 20 && r.monotone_variance && r.exchangeable;
    report.line(
        "gp-oracle",
        passed,
        format!(
            "{}/{} cases, max err mean={:.1e} var={:.1e}; moments {}/{} (worst |z|={:.2})",
            r.equivalent_cases, r.cases, r.max_mean_error, r.max_var_error, r.moment_passes, r.moment_instances,
            r.worst_moment_z
        ),
        started,
    );
}

fn lemma1_suite(report: &mut Report) {
    let started = Instant::now();
    let params = lemma1::Lemma1Params::default();
    let r = lemma1::run(&params).expect("lemma1 runs");
    let threshold = violation_threshold(0.05, 500);
    let passed = r.passed && r.episodes == 500 && r.frequency <= threshold;
    report.line(
        "lemma1",
        passed,
        format!("violations {}/{} = {:.4} (≤ {threshold:.4})", r.joint_violations, r.episodes, r.frequency),
        started,
    );
}

fn lemma3_suite(report: &mut Report) {
    let started = Instant::now();
    let r = lemma3::run(20_000, 0).expect("lemma3 runs");
    let zero_case = r.rows.iter().any(|row| row.separation == 0.0 && row.p0 == 0.5 && row.rhs == 0.25);
    let ok_rows = r.rows.iter().filter(|row| row.passed).count();
    let passed = r.passed && r.rows.len() == 20 && ok_rows == 20 && zero_case;
    report.line("lemma3", passed, format!("{ok_rows}/{} configurations, zero-gap case={zero_case}", r.rows.len()), started);
}

fn elimination_safety_suite(report: &mut Report) {
    let started = Instant::now();
    let result = run_experiment(&elimination_safety_config(500, 0, workers())).expect("experiment runs");
    let r = elimination_safety(&result);
    let threshold = violation_threshold(0.05, 500);
    let passed = r.passed && r.rows.len() == 2 && r.rows.iter().all(|row| row.episodes == 500 && row.frequency <= threshold);
    let detail = r
        .rows
        .iter()
        .map(|row| format!("{}={}/{}", row.agent.name(), row.eliminated, row.episodes))
        .collect::<Vec<_>>()
        .join(" ");
    report.line("elimination-safety", passed, format!("{detail} (≤ {threshold:.4})"), started);
}

fn determinism(report: &mut Report) {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for (name, w) in [("a", 1), ("b", workers().max(3)), ("c", 1)] {
        let mut experiment = ExperimentConfig::new(Setup::Kernel);
        experiment.seeds = 6;
        experiment.horizon = 100;
        experiment.workers = w;
        let dir = tmp.path().join(name);
        let cfg = RunConfig { experiment, output_dir: dir.clone() };
        write_run(&cfg, &run_experiment(&cfg.experiment).unwrap()).unwrap();
        dirs.push(dir);
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    let same = [TRACE_FILE, SUMMARY_FILE]
        .iter()
        .all(|f| dirs[1..].iter().all(|d| read(d, f) == read(&dirs[0], f)));
    report.line("determinism", same, format!("trace.csv and summary.json identical across 3 runs: {same}"), started);
}

/// Three buckets whose measurements peak at different arms; test data come
/// from bucket `b`.
fn write_bucketed_fixture(dir: &Path) -> BucketedSource {
    const ARMS: usize = 25;
    let peaks = [("a", 4.0), ("b", 12.0), ("c", 20.0)];
    let value = |peak: f64, arm: usize, sample: usize| {
        let d = arm as f64 - peak;
        let wobble = 0.15 * ((sample * 7 + arm * 3) as f64).sin() + 0.1 * (sample as f64 * 1.3).cos();
        2.0 * (-d * d / 10.0).exp() + wobble
    };
    let mut prior = String::from("bucket_id,sample_id,arm_id,value\n");
    for (label, peak) in peaks {
        for s in 0..12 {
            for a in 0..ARMS {
                writeln!(prior, "{label},{s},{a},{}", value(peak, a, s)).unwrap();
            }
        }
    }
    let mut test = String::from("bucket_id,sample_id,arm_id,value\n");
    for s in 100..106 {
        for a in 0..ARMS {
            writeln!(test, "b,{s},{a},{}", value(12.0, a, s)).unwrap();
        }
    }
    let (prior_csv, test_csv) = (dir.join("prior.csv"), dir.join("test.csv"));
    std::fs::write(&prior_csv, prior).unwrap();
    std::fs::write(&test_csv, test).unwrap();
    BucketedSource { prior_csv, test_csv, log_transform: false, ridge: 0.0 }
}

fn bucketed_fixture(report: &mut Report) {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(Setup::BucketedData, None);
    cfg.bucketed = Some(write_bucketed_fixture(tmp.path()));
    cfg.horizon = 100;
    cfg.seeds = 50;
    let run = Run::new(cfg);
    let means: HashMap<AgentKind, f64> = run.summaries.iter().map(|s| (s.agent, s.regret.final_mean)).collect();
    let best = AgentKind::ALL.into_iter().min_by(|a, b| means[a].total_cmp(&means[b])).unwrap();
    let detail = AgentKind::ALL.map(|k| format!("{}={:.2}", k.name(), means[&k])).join(" ");
    report.line("bucketed-fixture", best.is_oracle(), format!("lowest={} {detail}", best.name()), started);
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    gp_oracle_suite(&mut report);
    lemma1_suite(&mut report);
    lemma3_suite(&mut report);
    determinism(&mut report);
    bucketed_fixture(&mut report);
    lengthscale(&mut report);
    lengthscale_scaling(&mut report);
    kernel(&mut report);
    elimination_safety_suite(&mut report);
    subspace_scaling(&mut report);
    if report.failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", report.failures);
        ExitCode::FAILURE
    }
}
