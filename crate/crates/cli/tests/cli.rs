use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_distgen");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("DISTGEN_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_SWEEP: &str = r#"{
  "data": { "source": "synthetic", "pool_size": 2000, "test_size": 500, "synthetic": { "dim": 4 } },
  "features": { "features": 50 },
  "sweep": { "k_values": [1, 3], "n_values": [20], "repeats": 2 }
}"#;

#[test]
fn sweep_is_reproducible_with_and_without_plots() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sweep.json", SMALL_SWEEP);
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&a, &["--config", cfg, "--seed", "7", "dsvm-sweep"]);
    ok(
        &b,
        &["--config", cfg, "--seed", "7", "--no-plots", "dsvm-sweep"],
    );
    for f in ["dsvm_sweep.csv", "dsvm_sweep_summary.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(a.join("dsvm_sweep.svg").is_file());
    assert!(!b.join("dsvm_sweep.svg").exists());
    let (ra, rb) = (
        json(&a.join("dsvm_sweep.run.json")),
        json(&b.join("dsvm_sweep.run.json")),
    );
    assert_eq!(ra["deterministic"], rb["deterministic"]);
    assert!(ra["timing"]["wall_clock_seconds"].as_f64().unwrap() >= 0.0);

    let c = tmp.path().join("c");
    ok(
        &c,
        &["--config", cfg, "--seed", "8", "--no-plots", "dsvm-sweep"],
    );
    assert_ne!(
        std::fs::read(a.join("dsvm_sweep.csv")).unwrap(),
        std::fs::read(c.join("dsvm_sweep.csv")).unwrap()
    );
}

#[test]
fn sweep_rows_follow_the_schema() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "one.json",
        r#"{
  "data": { "source": "synthetic", "pool_size": 500, "test_size": 200, "synthetic": { "dim": 3 } },
  "features": { "features": 20 },
  "sweep": { "k_values": [4], "n_values": [10], "repeats": 1 }
}"#,
    );
    ok(
        tmp.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--no-plots",
            "dsvm-sweep",
        ],
    );
    let text = std::fs::read_to_string(tmp.path().join("dsvm_sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "experiment,K,n,repeat,seed,gen_gap,emp_risk_local,emp_risk_agg,emp_risk_agg_margin,pop_risk,delta_emp,bound_expected,bound_tail,bound_centralized"
    );
    assert_eq!(lines.len(), 3);
    let experiments: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(experiments.len(), 2);
    assert_ne!(experiments[0], experiments[1]);
    for l in &lines[1..] {
        assert_eq!(l.split(',').count(), 14);
    }
}

#[test]
fn malformed_config_reports_offset_and_exit_code_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", "{\n  \"n\": 100,\n  \"k\": ,\n}");
    let o = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "bounds"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("byte"), "{err}");
    assert!(err.contains("bad.json"), "{err}");

    let cfg = write_config(tmp.path(), "unknown.json", r#"{ "n": 100, "kk": 3 }"#);
    let o = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "bounds"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kk"));
}

#[test]
fn invalid_parameters_exit_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "theta.json", r#"{ "theta": -1.0 }"#);
    let o = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "bounds"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_mnist_exits_with_code_3() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["dsvm-sweep"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--synthetic"));

    let o = Command::new(BIN)
        .arg("--out")
        .arg(tmp.path())
        .arg("population-study")
        .env("DISTGEN_DATA_DIR", tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn rd_solve_matches_binary_symmetric_source() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("rd_bsc.json");
    ok(tmp.path(), &["--config", cfg.to_str().unwrap(), "rd-solve"]);
    let v = json(&tmp.path().join("rd_solve.json"));
    let rate = v["solution"]["point"]["rate"].as_f64().unwrap();
    assert!((rate - 0.36807).abs() < 1e-4, "{rate}");
    assert!(tmp.path().join("rd_solve.run.json").is_file());
}

#[test]
fn rd_solve_requires_a_config() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run(tmp.path(), &["rd-solve"]).status.code(), Some(2));
}

#[test]
fn bounds_at_the_reference_point() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("bounds.json");
    let stdout = ok(tmp.path(), &["--config", cfg.to_str().unwrap(), "bounds"]);
    assert!(stdout.contains("m=226"), "{stdout}");
    let v = json(&tmp.path().join("bounds.json"));
    let r = &v["results"]["report"];
    assert_eq!(r["params"]["m"], 226);
    let expected = r["expected"].as_f64().unwrap();
    let tail = r["tail"].as_f64().unwrap();
    assert!((expected / 2.355_008_981_390_994 - 1.0).abs() < 1e-9);
    assert!((tail / 2.367_712_137_565_766 - 1.0).abs() < 1e-9);
    let curve = std::fs::read_to_string(tmp.path().join("bounds_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 8);
    assert!(tmp.path().join("bounds_curve.svg").is_file());
}

#[test]
fn fsgld_labels_the_single_client_bound() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "fsgld.json",
        r#"{
  "data": { "source": "synthetic", "pool_size": 1000, "test_size": 500, "synthetic": { "dim": 4 } },
  "k_values": [1, 2], "n": 20, "batch": 5, "rounds": 20, "replicas": 3
}"#,
    );
    ok(
        tmp.path(),
        &["--config", cfg.to_str().unwrap(), "--no-plots", "fsgld"],
    );
    let text = std::fs::read_to_string(tmp.path().join("fsgld.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "K,n,replicas,mean_gap,se_gap,mean_pop_risk,bound,bound_within_run,bound_label"
    );
    let first = lines.next().unwrap();
    assert!(first.starts_with("1,"));
    assert!(first.ends_with("single-client (Wang-form)"), "{first}");
    assert!(!lines.next().unwrap().contains("Wang"));
}

#[test]
fn threads_flag_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sweep.json", SMALL_SWEEP);
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(
        &a,
        &[
            "--config",
            cfg,
            "--threads",
            "1",
            "--no-plots",
            "dsvm-sweep",
        ],
    );
    ok(
        &b,
        &[
            "--config",
            cfg,
            "--threads",
            "3",
            "--no-plots",
            "dsvm-sweep",
        ],
    );
    assert_eq!(
        std::fs::read(a.join("dsvm_sweep.csv")).unwrap(),
        std::fs::read(b.join("dsvm_sweep.csv")).unwrap()
    );
}
