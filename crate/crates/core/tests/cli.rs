use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

use qmem_core::config::ExperimentConfig;
use qmem_core::meanfield::g;
use qmem_core::output::read_csv_rows;

fn qmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmem"))
        .args(args)
        .env_remove("QMEM_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn json(args: &[&str]) -> Value {
    let out = qmem(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn erasure_bound_near_the_limit() {
    let out = qmem(&[
        "bounds", "--l", "1000", "--p", "0.2", "--alpha", "0.15", "--theta", "1e-6", "--noise",
        "erasure",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta -> 0"));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let n_min = v["result"]["report"]["n_min"]["value"].as_f64().unwrap();
    // beta = 1/4 - 1e-6, capacity 1/2 + 2e-6
    assert!((n_min - 1000.0 / (0.5 + 2e-6)).abs() < 1e-6, "{n_min}");
    assert!((n_min - 2000.0).abs() < 0.01);
}

#[test]
fn meanfield_matches_iteration() {
    let v = json(&[
        "meanfield",
        "--p",
        "0.2",
        "--alpha",
        "0.05",
        "--beta",
        "0.5",
    ]);
    let r = &v["result"];
    let delta = r["delta"].as_f64().unwrap();
    assert!((delta - 0.05).abs() < 1e-15);
    let mut x = 0.0;
    let mut t = 0;
    while x <= 0.5 {
        x = g(1.0, 0.2, 0.05, delta, x);
        t += 1;
    }
    assert_eq!(r["t"].as_u64(), Some(t));
    assert_eq!(r["t_iteration"].as_u64(), Some(t));
    assert_eq!(t, 9);
}

#[test]
fn no_noise_means_no_exceedance() {
    let out = qmem(&[
        "simulate", "--n", "100", "--p", "0", "--n-traj", "200", "--t-max", "20", "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# qmem-csv v1 kind=simulate\n# config={"));
    let rows = read_csv_rows(&text);
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r[2] == "0"));
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    fs::write(&path, "p = 0.2\npp = 0.2\n").unwrap();
    let out = qmem(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pp"));
}

#[test]
fn bad_values_are_usage_errors() {
    assert_eq!(
        qmem(&["bounds", "--l", "10", "--p", "1.5", "--theta", "0.1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(qmem(&["meanfield", "--p", "0.2"]).status.code(), Some(1));
    assert_eq!(
        qmem(&["sweep", "--grid", "pp:0:1:3"]).status.code(),
        Some(1)
    );
    assert_eq!(qmem(&["sweep", "--grid", "p:0:1:1"]).status.code(), Some(1));
    assert_eq!(qmem(&["nonsense"]).status.code(), Some(1));
    assert_eq!(qmem(&["--help"]).status.code(), Some(0));
}

#[test]
fn impossible_region_exits_zero() {
    let v = json(&[
        "bounds", "--l", "100", "--p", "0.2", "--alpha", "0.05", "--theta", "0.1",
    ]);
    let n_min = &v["result"]["report"]["n_min"];
    assert_eq!(n_min["kind"], "impossible");
    assert_eq!(n_min["threshold"].as_f64(), Some(0.1));
    let v = json(&["meanfield", "--p", "0.2", "--alpha", "0.1", "--beta", "0.9"]);
    assert_eq!(v["result"]["crossing"]["kind"], "impossible");
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        "# exact run\nn = 30\np = 0.2\nalpha = 0.1\nt_max = 10\n",
    )
    .unwrap();
    let v = json(&["exact", "--config", conf.to_str().unwrap(), "--p", "0.3"]);
    assert_eq!(v["config"]["params"]["p"].as_f64(), Some(0.3));
    assert_eq!(v["config"]["params"]["n"].as_u64(), Some(30));
    assert_eq!(v["result"]["tail_prob_by_t"].as_array().unwrap().len(), 11);
}

#[test]
fn output_is_written_atomically_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qmem"))
        .args([
            "couple", "--n", "20", "--q-low", "0.01", "--q-high", "0.1", "--n-traj", "50",
            "--t-max", "10",
        ])
        .env("QMEM_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(dir.path().join("qmem-couple.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["result"]["inclusion_violations"].as_u64(), Some(0));
    let cfg = ExperimentConfig::from_json(&v["config"].to_string()).unwrap();
    assert_eq!(cfg.q_high, Some(0.1));

    let path = dir.path().join("explicit/run.csv");
    let out = qmem(&[
        "exact",
        "--n",
        "10",
        "--t-max",
        "5",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# qmem-csv v1 kind=exact"));
    let names: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
    assert_eq!(names.len(), 1);
}

#[test]
fn sweep_over_decoherence_rate() {
    let out = qmem(&[
        "sweep",
        "--kappa",
        "1",
        "--t-g",
        "0.1",
        "--l",
        "10",
        "--theta",
        "0.01",
        "--alpha",
        "0.02",
        "--grid",
        "kappa:0.5:2:4",
        "--format",
        "csv",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = read_csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r.last().unwrap(), "", "{r:?}");
        let kappa: f64 = r[0].parse().unwrap();
        let p: f64 = r[2].parse().unwrap();
        assert!((p - (1.0 - (-kappa * 0.1f64).exp())).abs() < 1e-15);
    }
}

#[test]
fn kappa_surface_in_bounds() {
    let v = json(&[
        "bounds", "--kappa", "1", "--t-g", "0.001", "--alpha", "0.01",
    ]);
    assert!(v["result"]["report"].is_null());
    let k = &v["result"]["kappa"]["at_alpha"];
    let exact = k["overhead"]["value"].as_f64().unwrap();
    let p = 1.0 - (-0.001f64).exp();
    assert!((exact - p / (0.02 - p)).abs() < 1e-12);
    assert!(k["small_kt_relative_error"].as_f64().unwrap() < 1e-3);
}

#[test]
fn verify_is_green_and_deterministic() {
    let a = qmem(&["verify", "--seed", "3"]);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stdout)
    );
    let b = qmem(&["verify", "--seed", "3"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn thread_count_does_not_change_results() {
    let args = ["simulate", "--n", "50", "--n-traj", "500", "--t-max", "15"];
    let one = qmem(&[&args[..], &["--threads", "1"]].concat());
    let four = qmem(&[&args[..], &["--threads", "4"]].concat());
    let a: Value = serde_json::from_slice(&one.stdout).unwrap();
    let b: Value = serde_json::from_slice(&four.stdout).unwrap();
    assert_eq!(a["result"], b["result"]);
}
