use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_prior-bandits");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut all = vec!["run"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", out]);
    run(&all)
}

const TRACE_HEADER: [&str; 11] = [
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

/// Parses every emitted file and checks its schema.
fn check_schema(dir: &Path, expected_rows: usize) {
    let mut reader = csv::Reader::from_path(dir.join("trace.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, TRACE_HEADER);
    let mut rows = 0;
    let mut last: Option<(u64, String, usize)> = None;
    for rec in reader.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.len(), TRACE_HEADER.len());
        let seed: u64 = rec[0].parse().unwrap();
        let t: usize = rec[2].parse().unwrap();
        rec[3].parse::<usize>().unwrap();
        for i in [5, 6, 7] {
            rec[i].parse::<f64>().unwrap();
        }
        for i in [4, 8, 10] {
            assert!(rec[i].is_empty() || rec[i].parse::<usize>().is_ok());
        }
        assert!(rec[9].is_empty() || rec[9].parse::<f64>().is_ok());
        if let Some((s, a, pt)) = &last {
            if *s == seed && *a == rec[1] {
                assert_eq!(t, pt + 1);
            } else {
                assert_eq!(t, 1);
                assert!(seed >= *s);
            }
        }
        last = Some((seed, rec[1].to_string(), t));
        rows += 1;
    }
    assert_eq!(rows, expected_rows);

    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    for key in ["setup", "prior_ids", "num_arms", "horizon", "seeds", "aborted_episodes", "agents", "bounds"] {
        assert!(summary.get(key).is_some(), "summary.json lacks {key}");
    }
    for agent in summary["agents"].as_array().unwrap() {
        for key in ["mean_curve", "se_curve", "final_mean", "final_se", "final_quantiles"] {
            assert!(agent["regret"].get(key).is_some(), "regret lacks {key}");
        }
    }
    let echo: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("config.echo.json")).unwrap()).unwrap();
    assert_eq!(echo["schema_version"], 1);
    assert!(echo["experiment"]["setup"].is_string());
}

#[test]
fn run_writes_one_row_per_seed_agent_step() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), &["--setup", "kernel", "--seeds", "5", "--T", "50"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Default roster has six agents.
    check_schema(tmp.path(), 5 * 6 * 50);
}

#[test]
fn identical_configs_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["--setup", "lengthscale", "--seeds", "3", "--T", "20", "--n", "50", "--workers", "2"];
    assert!(run_in(&a, &args).status.success());
    let mut one_worker = args.to_vec();
    one_worker[9] = "1";
    assert!(run_in(&b, &one_worker).status.success());
    for f in ["trace.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    let out_dir = tmp.path().join("from-config");
    std::fs::write(
        &cfg,
        format!(
            "setup = \"lengthscale-scaling\"\nnum_priors = 3\nseeds = 9\nhorizon = 10\nnum_arms = 40\n[output]\ndir = \"{}\"\n",
            out_dir.display()
        ),
    )
    .unwrap();
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "seeds=2",
        "--agents",
        "hp-gp-ts,oracle-gp-ts",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    check_schema(&out_dir, 2 * 2 * 10);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["prior_ids"].as_array().unwrap().len(), 3);
}

#[test]
fn invalid_configs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["--setup", "kernel", "--P", "3"],
        vec!["--setup", "nonsense"],
        vec!["--setup", "kernel", "--delta", "2"],
        vec!["--setup", "kernel", "--set", "horizn=3"],
        vec!["--setup", "kernel", "--agents", "gp-ts"],
    ] {
        let out = run_in(tmp.path(), &args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
    assert!(!tmp.path().join("trace.csv").exists());
}

#[test]
fn verify_reports_json() {
    let out = run(&["verify", "lemma3"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["suite"], "lemma3");
    assert_eq!(v["passed"], true);
    assert_eq!(v["report"]["rows"].as_array().unwrap().len(), 20);

    let out = run(&["verify", "lemma7"]);
    assert!(!out.status.success());
}

#[test]
fn mig_single_step_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("mig.json");
    let out = run(&["mig", "--setup", "kernel", "--T", "1", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    // Every kernel-setup prior has unit maximum variance on the arm grid.
    let expected = 0.5 * (1.0f64 + 1.0 / 0.0625).ln();
    for r in rows {
        assert!((r["value"].as_f64().unwrap() - expected).abs() < 1e-6, "{r}");
    }
}

#[test]
fn mig_matern32_largest_on_kernel_setup() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("mig.json");
    let out = run(&["mig", "--setup", "kernel", "--T", "500", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    let best = rows.iter().max_by(|a, b| a["value"].as_f64().unwrap().total_cmp(&b["value"].as_f64().unwrap())).unwrap();
    assert_eq!(best["prior"], "matern32");
    assert_eq!(v["gamma_hat"], best["value"]);
}

#[test]
fn report_pools_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_in(&a, &["--setup", "kernel", "--seeds", "2", "--T", "10", "--n", "30"]).status.success());
    assert!(run_in(&b, &["--setup", "kernel", "--seeds", "3", "--T", "10", "--n", "30", "--seed-base", "2"])
        .status
        .success());
    let pooled = tmp.path().join("pooled.json");
    let out = run(&[
        "report",
        "--input",
        a.join("trace.csv").to_str().unwrap(),
        b.join("trace.csv").to_str().unwrap(),
        "--out",
        pooled.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&pooled).unwrap()).unwrap();
    assert_eq!(v["seeds"], 5);
    assert_eq!(v["prior_ids"].as_array().unwrap().len(), 6);
    assert_eq!(v["prior_ids"][3], "matern32");
    for agent in v["agents"].as_array().unwrap() {
        assert_eq!(agent["regret"]["episodes"], 5);
    }

    // Pooling the same five seeds from a single run gives the same curves.
    let c = tmp.path().join("c");
    assert!(run_in(&c, &["--setup", "kernel", "--seeds", "5", "--T", "10", "--n", "30"]).status.success());
    let direct: serde_json::Value = serde_json::from_slice(&std::fs::read(c.join("summary.json")).unwrap()).unwrap();
    for (p, d) in v["agents"].as_array().unwrap().iter().zip(direct["agents"].as_array().unwrap()) {
        assert_eq!(p["regret"]["mean_curve"], d["regret"]["mean_curve"]);
    }
}

#[test]
fn report_rejects_bad_header() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("trace.csv");
    std::fs::write(&bad, "seed,agent,t\n0,hp-gp-ts,1\n").unwrap();
    let out = run(&["report", "--input", bad.to_str().unwrap(), "--out", tmp.path().join("o.json").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("header"));
}
