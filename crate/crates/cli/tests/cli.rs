use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use sparse_ising_cli::ExperimentConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparse-ising"));
    c.env_remove(sparse_ising_cli::OUT_DIR_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sparse-ising-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn oracle_output_is_byte_identical_across_runs() {
    let args = ["oracle", "--gen", "sbm:4,2,0", "--beta", "0.3", "--seed", "7"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let doc = json(&a);
    assert_eq!(doc["n"], 4);
    assert_eq!(doc["schema"], 1);
    let marg = doc["marginals"].as_array().unwrap();
    assert!(marg.iter().all(|p| (0.0..=1.0).contains(&p.as_f64().unwrap())));
    let cov = doc["covariance"].as_array().unwrap();
    for (i, row) in cov.iter().enumerate() {
        let row = row.as_array().unwrap();
        let mean = doc["mean"][i].as_f64().unwrap();
        assert!((row[i].as_f64().unwrap() - (1.0 - mean * mean)).abs() < 1e-12);
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let base = ["decompose", "--gen", "sbm:2000,4,0.3", "--seed", "3"];
    let a = run(&base);
    let mut more = base.to_vec();
    more.extend(["--threads", "1"]);
    let b = run(&more);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn oracle_refuses_large_models() {
    let out = run(&["oracle", "--gen", "er:30,3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("oracle"));
}

#[test]
fn decompose_bulk_degree_at_scale() {
    let out = run(&["decompose", "--gen", "sbm:100000,5,0", "--epsilon", "0.5", "--seed", "1"]);
    let doc = json(&out);
    let max_deg = doc["bulk_max_degree"].as_f64().unwrap();
    assert!(max_deg <= 7.5, "bulk max degree {max_deg}");
    assert_eq!(doc["bulk_degree_bound"].as_f64().unwrap(), 7.5);
    assert!(doc["verdict"]["hard_failures"].as_array().unwrap().is_empty());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn strict_turns_warnings_into_failures() {
    // A giant near-forest component breaks the near-forest property: soft by default.
    let args = ["decompose", "--gen", "er:3000,4", "--epsilon", "0.5", "--seed", "2"];
    let lax = run(&args);
    let doc = json(&lax);
    assert!(!doc["verdict"]["warnings"].as_array().unwrap().is_empty());
    assert_eq!(lax.status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(run(&strict).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["decompose"]).status.code(), Some(1));
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["oracle", "--gen", "sbm:4,2"]).status.code(), Some(1));
    assert_eq!(run(&["report", "--gen", "er:10,2", "--suite", "other"]).status.code(), Some(1));
    assert_eq!(run(&["oracle", "--input", "/nonexistent/graph.txt"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn out_dir_env_and_edge_list_round_trip() {
    let dir = scratch("roundtrip");
    let st = bin()
        .env(sparse_ising_cli::OUT_DIR_ENV, &dir)
        .args(["generate", "--gen", "er:12,2", "--seed", "5", "--out", "g.txt"])
        .status()
        .unwrap();
    assert!(st.success());
    let path = dir.join("g.txt");
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# sparse-ising"));
    let via_file = run(&["oracle", "--input", path.to_str().unwrap(), "--signs", "ferro", "--beta", "0.2"]);
    let via_model = run(&["oracle", "--model", path.to_str().unwrap(), "--signs", "ferro", "--beta", "0.2"]);
    let direct = run(&["oracle", "--gen", "er:12,2", "--seed", "5", "--signs", "ferro", "--beta", "0.2"]);
    assert_eq!(json(&via_file)["logZ"], json(&direct)["logZ"]);
    assert_eq!(json(&via_file)["logZ"], json(&via_model)["logZ"]);
}

#[test]
fn config_round_trips_and_hash_is_stable() {
    let out = run(&["oracle", "--gen", "er:6,2", "--beta", "0.25", "--seed", "9"]);
    let doc = json(&out);
    let cfg = ExperimentConfig::from_json(&doc["config"].to_string()).unwrap();
    assert_eq!(cfg.hash(), doc["config_hash"].as_str().unwrap());
    assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    let other = json(&run(&["oracle", "--gen", "er:6,2", "--beta", "0.26", "--seed", "9"]));
    assert_ne!(other["config_hash"], doc["config_hash"]);
}

#[test]
fn sample_writes_csv_trace() {
    let out = run(&[
        "sample", "--gen", "sbm:50,3,0.5", "--steps", "100", "--chains", "2", "--stride", "10", "--observe",
        "mag,energy,overlap",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "chain,step,magnetization,energy,overlap");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 5 && r.iter().all(|c| !c.is_empty())));
    assert!(rows.iter().any(|r| r[0] == "1"));
    for r in &rows {
        let m: f64 = r[2].parse().unwrap();
        assert!(m.abs() <= 1.0 + 1e-12);
    }
    assert_eq!(run(&["sample", "--gen", "er:10,2", "--observe", "bogus"]).status.code(), Some(1));
}

#[test]
fn centered_model_needs_labels() {
    assert_eq!(run(&["oracle", "--gen", "er:8,2", "--centered"]).status.code(), Some(1));
    let out = run(&["oracle", "--gen", "sbm:8,2,0.5", "--centered", "--beta", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    // Centered interactions are dense: every pair couples.
    let cov = &json(&out)["covariance"];
    assert!(cov[0][7].as_f64().unwrap().abs() > 0.0);
}

#[test]
fn spectra_kinds() {
    let bulk = json(&run(&["spectra", "--gen", "er:3000,4", "--what", "bulk", "--seed", "4"]));
    assert!(bulk["value"].as_f64().unwrap() > 0.0);
    assert!(bulk["bound"].as_f64().unwrap() > 0.0);
    let nb = json(&run(&["spectra", "--gen", "er:2000,4", "--what", "nonbacktracking"]));
    let (rho, mean_excess) = (nb["value"].as_f64().unwrap(), nb["bound"].as_f64().unwrap());
    assert!(rho > 0.8 * mean_excess && rho < 1.2 * mean_excess, "{rho} vs {mean_excess}");
    assert!(nb["pass"].is_null());

    let dir = scratch("tree");
    let tree = dir.join("path.txt");
    fs::write(&tree, "5 4\n0 1 1\n1 2 1\n2 3 1\n3 4 1\n").unwrap();
    let t = tree.to_str().unwrap();
    let bethe = run(&["spectra", "--input", t, "--what", "bethe", "--t", "0.9"]);
    assert_eq!(bethe.status.code(), Some(0));
    assert!(json(&bethe)["value"].as_f64().unwrap() > 0.0);
    let dist = run(&["spectra", "--input", t, "--what", "distance", "--ell", "3"]);
    assert_eq!(dist.status.code(), Some(0), "{}", String::from_utf8_lossy(&dist.stderr));
    assert!(json(&dist)["value"].as_f64().unwrap() <= 1.0);
    let cyc = dir.join("cycle.txt");
    fs::write(&cyc, "3 3\n0 1 1\n1 2 1\n2 0 1\n").unwrap();
    assert_eq!(run(&["spectra", "--input", cyc.to_str().unwrap(), "--what", "distance"]).status.code(), Some(1));
}

#[test]
fn localize_small_instance() {
    let out = run(&["localize", "--gen", "er:12,2", "--beta", "0.15", "--t-grid", "2", "--probes", "zero,plus,gaussian:1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out);
    assert_eq!(doc["per_t"].as_array().unwrap().len(), 3);
    assert_eq!(doc["points"].as_array().unwrap().len(), 9);
    assert!(doc["mixture_residual"].as_f64().unwrap() <= 0.02);
    assert!(doc["fitted_constant"].as_f64().unwrap() > 0.0);
    assert_eq!(run(&["localize", "--gen", "er:12,2", "--probes", "bogus"]).status.code(), Some(1));
    assert_eq!(run(&["localize", "--gen", "sbm:12,2,0.5", "--centered"]).status.code(), Some(1));
}

#[test]
fn report_writes_verdicts_and_mixing_csv() {
    let dir = scratch("report");
    let path = dir.join("r.json");
    let st = bin()
        .args(["report", "--gen", "sbm:3000,3,0.5", "--beta", "0.1", "--seed", "2", "--out"])
        .arg(&path)
        .status()
        .unwrap();
    let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["decomposition_stats", "spectral_verdicts", "covariance_verdicts", "mixing", "tails", "verdict"] {
        assert!(!doc[key].is_null(), "missing {key}");
    }
    let ok = doc["verdict"]["pass"].as_bool().unwrap();
    assert_eq!(st.code(), Some(if ok { 0 } else { 2 }));
    let csv = fs::read_to_string(dir.join("r.json.mixing.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("seed,beta,step,tv_worst"));
}
