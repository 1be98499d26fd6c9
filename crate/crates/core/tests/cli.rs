use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

use bouncy_core::diagnostics::ess;
use bouncy_core::harness::{read_chain_csv, run_config, RunConfig};

fn bouncy(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bouncy"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env("BOUNCY_WORKERS", w),
        None => cmd.env_remove("BOUNCY_WORKERS"),
    };
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, config: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn minimal_config_writes_chain_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"sampler": "hbps", "target": {"type": "gaussian", "parameters": {"dim": 2}}, "iterations": 100, "seed": 5}),
    );
    let out = bouncy(&["sample", &cfg], Some("1"));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let files: Vec<String> = std::fs::read_dir(dir.path().join("output"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(files.len(), 2, "{files:?}");
    let csv = std::fs::read_to_string(dir.path().join("output/chain_0.csv")).unwrap();
    assert!(csv.starts_with("x1,x2\n"));
    assert_eq!(csv.lines().count(), 101);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("output/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 5);
    assert_eq!(summary["sampler"], "hbps");
    assert!(summary["min_ess"].as_f64().unwrap() > 0.0);
    assert!(summary["ess_per_second"].as_f64().unwrap() > 0.0);
    assert!(summary["event_counts"]["bounces"].as_u64().unwrap() > 0);
    assert_eq!(summary["config"]["iterations"], 100);
    assert!(summary["version"].is_string());
}

#[test]
fn unknown_sampler_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"sampler": "gibbs", "target": {"type": "gaussian", "parameters": {"dim": 2}}}));
    let out = bouncy(&["sample", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`sampler`"), "{}", stderr(&out));

    let cfg = write_config(dir.path(), "d.json", &json!({"sampler": "hbps", "target": {"type": "gaussian", "parameters": {"dim": 2}}, "iteratons": 5}));
    let out = bouncy(&["sample", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`iteratons`"));

    std::fs::write(dir.path().join("e.json"), "{ not json").unwrap();
    let out = bouncy(&["sample", dir.path().join("e.json").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_start_exits_3_with_kind() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"sampler": "hbps", "target": {"type": "truncated_gaussian", "parameters": {"dim": 2}}, "x0": [1.0, -0.5], "iterations": 10}),
    );
    let out = bouncy(&["sample", &cfg], None);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("Infeasible"), "{}", stderr(&out));
}

#[test]
fn chains_are_bitwise_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (name, workers) in [("a", "1"), ("b", "4"), ("c", "4")] {
        let cfg = write_config(
            dir.path(),
            &format!("{name}.json"),
            &json!({
                "sampler": "bps",
                "target": {"type": "gaussian", "parameters": {"rho": 0.5}},
                "iterations": 300,
                "chains": 4,
                "seed": 99,
                "output_dir": name
            }),
        );
        let out = bouncy(&["sample", &cfg], Some(workers));
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    for k in 0..4 {
        let read = |d: &str| std::fs::read(dir.path().join(d).join(format!("chain_{k}.csv"))).unwrap();
        assert_eq!(read("a"), read("b"));
        assert_eq!(read("b"), read("c"));
    }
    let read = |k: usize| std::fs::read(dir.path().join("a").join(format!("chain_{k}.csv"))).unwrap();
    assert_ne!(read(0), read(1), "chains must use distinct streams");
}

#[test]
fn bad_worker_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"sampler": "hbps", "target": {"type": "gaussian", "parameters": {"dim": 1}}, "iterations": 10}));
    let out = bouncy(&["sample", &cfg], Some("zero"));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("BOUNCY_WORKERS"));
}

#[test]
fn csv_round_trip_preserves_ess() {
    let dir = tempfile::tempdir().unwrap();
    let raw = json!({
        "sampler": "hbps-split",
        "target": {"type": "gaussian", "parameters": {"rho": 0.7}},
        "iterations": 2000,
        "thin": 3,
        "step": 0.1,
        "steps_per_proposal": 10,
        "output_dir": dir.path().to_str().unwrap()
    });
    let cfg = RunConfig::from_value(raw, dir.path()).unwrap();
    let out = run_config(&cfg, 2).unwrap();
    let chain = &out.chains[0];
    assert_eq!(chain.len(), 2000usize.div_ceil(3));
    let back = read_chain_csv(&out.chain_paths[0]).unwrap();
    for j in 0..2 {
        assert_eq!(ess(&chain.column(j)).unwrap(), ess(&back.column(j)).unwrap());
    }
    assert!(out.summary["acceptance_rate"].as_f64().unwrap() > 0.5);
}

#[test]
fn every_sampler_runs_from_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("design.csv"), "y,x1,x2\n1,0.5,-1\n0,-0.3,0.8\n1,1.2,0.1\n0,-1.0,-0.4\n").unwrap();
    let gaussian = json!({"type": "gaussian", "parameters": {"mean": [1.0, -1.0], "covariance": [[1.0, 0.3], [0.3, 0.5]]}});
    let configs = [
        json!({"sampler": "hbps", "target": gaussian, "surrogate": {"type": "harmonic", "scale": 1.2}}),
        json!({"sampler": "hbps", "target": {"type": "logistic", "parameters": {"csv": "design.csv", "prior_scale": 2.0}}}),
        json!({"sampler": "hbps", "target": {"type": "mixture", "parameters": {"dim": 2}}}),
        json!({"sampler": "hbps", "target": {"type": "gaussian", "parameters": {"dim": 2}, "constraints": [{"normal": [1.0, 1.0], "offset": -1.0}]}}),
        json!({"sampler": "hbps-nuts", "target": gaussian, "base_step": 0.1, "max_depth": 6}),
        json!({"sampler": "hbps-nuts", "target": {"type": "synthetic_logistic", "parameters": {"rows": 40, "dim": 3, "nonzero": 1}}}),
        json!({"sampler": "hbps-split", "target": gaussian, "surrogate": "harmonic", "inner_flow": "leapfrog", "leapfrog_substeps": 2}),
        json!({"sampler": "hbps-local", "target": gaussian}),
        json!({"sampler": "hbps-local", "target": {"type": "mixture", "parameters": {"dim": 3}}, "factors": [[0, 2], [1]]}),
        json!({"sampler": "bps", "target": {"type": "truncated_gaussian", "parameters": {"dim": 2, "signs": [1, -1]}}, "refresh_rate": 0.5}),
        json!({"sampler": "bps", "target": gaussian, "thinning": true}),
    ];
    for (i, mut c) in configs.into_iter().enumerate() {
        c["iterations"] = json!(200);
        c["seed"] = json!(i);
        c["output_dir"] = json!(format!("out{i}"));
        let cfg = RunConfig::from_value(c.clone(), dir.path()).unwrap_or_else(|e| panic!("config {i}: {e}"));
        let out = run_config(&cfg, 1);
        let out = match out {
            Ok(o) => o,
            Err(e) if c["sampler"] == "bps" && c["target"]["type"] == "truncated_gaussian" => {
                // BPS has no boundary handling; it must refuse rather than leak
                assert_eq!(e.exit_code(), 3, "{e}");
                continue;
            }
            Err(e) => panic!("config {i}: {e}"),
        };
        assert_eq!(out.chains[0].len(), 200);
        assert!(out.chains[0].samples().iter().all(|x| x.is_finite()));
    }
}

#[test]
fn ess_converge_and_benchmark_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        &json!({"sampler": "hbps", "target": {"type": "gaussian", "parameters": {"dim": 2}}, "iterations": 500}),
    );
    assert_eq!(bouncy(&["sample", &cfg], None).status.code(), Some(0));
    let out = bouncy(&["ess", dir.path().join("output/chain_0.csv").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["per_dim_ess"].as_array().unwrap().len(), 2);
    let out = bouncy(&["ess", dir.path().join("missing.csv").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"target": {"type": "gaussian", "parameters": {"dim": 3}}, "replications": 100, "delta_t": [0.4, 0.2]}),
    );
    let out = bouncy(&["converge", &cfg], Some("2"));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("output/convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("delta_t,frequency,std_error,replications"));
    assert_eq!(lines.count(), 2);

    let cfg = write_config(
        dir.path(),
        "b.json",
        &json!({"target": {"type": "gaussian", "parameters": {"rho": 0.5}}, "iterations": 300, "travel_times": [1.0], "refresh_rates": [0.1, 1.0]}),
    );
    let out = bouncy(&["benchmark", &cfg], None);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("output/benchmark.csv")).unwrap();
    assert!(csv.starts_with("sampler,travel_time,refresh_rate,min_ess,ess_per_second,relative_ess,relative_ess_per_second\n"));
    assert_eq!(csv.lines().count(), 4);
}
