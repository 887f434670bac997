use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qmetro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmetro"))
        .args(args)
        .env_remove("QMETRO_THREADS")
        .output()
        .expect("binary runs")
}

fn qmetro_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmetro"))
        .args(args)
        .env("QMETRO_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "command failed: {}", stderr(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const MZ_EXACT: &str = r#"{
    "model": "mz", "provider": "exact", "strategy": "none",
    "grid": {"lo": 0.0, "hi": 3.141592653589793, "n": 100},
    "n_probes": 100, "n_truths": 100, "n_reps": 30,
    "seeds": {"estimation": 11},
    "output": {"curve": "curve.csv", "summary": "summary.json"}
}"#;

#[test]
fn qcrb_reports_the_four_arm_bound() {
    let out = ok(qmetro(&["qcrb"]));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((doc["coefficient"].as_f64().unwrap() - 2.5).abs() < 1e-6);
}

#[test]
fn mz_exact_curve_reaches_the_shot_noise_limit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mz.json", MZ_EXACT);
    ok(qmetro(&["run-estimation", "--config", s(&cfg)]));
    let text = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N,qloss,dispersion");
    assert_eq!(lines.len(), 101);
    let last: Vec<&str> = lines[100].split(',').collect();
    assert_eq!(last[0], "100");
    let q: f64 = last[1].parse().unwrap();
    assert!((0.005..=0.02).contains(&q), "Qloss at N=100 is {q}");

    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"]["estimation"], 11);
    assert_eq!(summary["bounds"]["snl"], 1.0);
    assert!(summary["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    assert_eq!(summary["artifacts"]["curve"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_and_thread_caps_give_identical_curves() {
    let dir = tempfile::tempdir().unwrap();
    let body = MZ_EXACT.replace("\"n_truths\": 100, \"n_reps\": 30", "\"n_truths\": 8, \"n_reps\": 5");
    let cfg = write_config(dir.path(), "mz.json", &body);
    let run = |curve: &str, threads: Option<&str>| {
        let path = dir.path().join(curve);
        let args = ["run-estimation", "--config", s(&cfg), "--curve", s(&path)];
        ok(match threads {
            Some(t) => qmetro_env(&args, t),
            None => qmetro(&args),
        });
        std::fs::read(path).unwrap()
    };
    let a = run("a.csv", None);
    assert_eq!(a, run("b.csv", None));
    assert_eq!(a, run("c.csv", Some("1")));
    assert_eq!(a, run("d.csv", Some("3")));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let out = qmetro_env(&["qcrb"], "zero");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("QMETRO_THREADS"));
    assert_eq!(qmetro_env(&["qcrb"], "0").status.code(), Some(2));
}

#[test]
fn smoke_config_emits_a_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "smoke.json",
        r#"{"model": "fourarm", "provider": "exact", "strategy": "random",
            "grid": {"lo": 0.0, "hi": 3.141592653589793, "n": 4},
            "n_probes": 1, "n_truths": 1, "n_reps": 1}"#,
    );
    let trace = dir.path().join("trace.csv");
    ok(qmetro(&["run-estimation", "--config", s(&cfg), "--trace", s(&trace)]));
    let curve = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 2);
    let trace = std::fs::read_to_string(trace).unwrap();
    assert!(trace.starts_with("probe_index,c0,c1,c2,outcome,est0,est1,est2,cov_trace,qloss,snap_residue"), "{trace}");
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!((summary["bounds"]["qcrb"].as_f64().unwrap() - 2.5).abs() < 1e-6);
}

#[test]
fn grid_training_and_estimation_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.txt");
    let net = dir.path().join("net.json");
    let losses = dir.path().join("losses.csv");
    ok(qmetro(&[
        "generate-grid", "--lo", "0", "--hi", "3.141592653589793", "--n", "30", "--r", "100", "--seed", "4",
        "--model", "mz", "--out", s(&data),
    ]));
    ok(qmetro(&[
        "train-nn", "--data", s(&data), "--epochs", "8", "--batch", "128", "--seed", "5", "--out", s(&net),
        "--losses", s(&losses),
    ]));
    assert_eq!(std::fs::read_to_string(&losses).unwrap().lines().count(), 9);
    let cfg = write_config(
        dir.path(),
        "nn.json",
        r#"{"model": "mz", "provider": "nn", "strategy": "none",
            "n_probes": 30, "n_truths": 10, "n_reps": 4,
            "artifacts": {"dataset": "data.txt", "network": "net.json"}}"#,
    );
    ok(qmetro(&["run-estimation", "--config", s(&cfg)]));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let hash = summary["artifacts"]["network"]["sha256"].as_str().unwrap();
    assert_eq!(hash, qmetro_cli::pipeline::sha256_file(&net).unwrap());
    assert!((summary["notes"]["prior_eigenvalue"].as_f64().unwrap() - 1.0).abs() < 0.1);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("curve.csv")).unwrap().lines().count(),
        31
    );
}

#[test]
fn policy_training_feeds_estimation() {
    let dir = tempfile::tempdir().unwrap();
    let env = write_config(
        dir.path(),
        "env.json",
        r#"{"model": "fourarm", "provider": "exact", "strategy": "random",
            "grid": {"lo": 0.0, "hi": 3.141592653589793, "n": 4},
            "n_probes": 5, "n_truths": 3, "n_reps": 2}"#,
    );
    let policy = dir.path().join("policy.json");
    let log = dir.path().join("cem.csv");
    ok(qmetro(&[
        "train-policy", "--env", s(&env), "--episodes", "60", "--population", "20", "--seed", "3", "--out",
        s(&policy), "--log", s(&log),
    ]));
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 4);
    let cfg = write_config(
        dir.path(),
        "run.json",
        r#"{"model": "fourarm", "provider": "exact", "strategy": "policy",
            "grid": {"lo": 0.0, "hi": 3.141592653589793, "n": 4},
            "n_probes": 5, "n_truths": 3, "n_reps": 2,
            "artifacts": {"policy": "policy.json"}}"#,
    );
    ok(qmetro(&["run-estimation", "--config", s(&cfg)]));
}

#[test]
fn missing_artifact_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"model": "mz", "provider": "nn", "strategy": "none",
            "n_probes": 5, "n_truths": 1, "n_reps": 1,
            "artifacts": {"dataset": "absent.txt", "network": "absent.json"}}"#,
    );
    let out = qmetro(&["run-estimation", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("absent.txt") && err.contains("absent.json"), "{err}");
}

#[test]
fn diverging_training_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.txt");
    ok(qmetro(&["generate-grid", "--lo", "0", "--hi", "3", "--n", "10", "--r", "20", "--model", "mz", "--out", s(&data)]));
    let out = qmetro(&["train-nn", "--data", s(&data), "--epochs", "3", "--lr", "1e300", "--out", s(&dir.path().join("n.json"))]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmetro(&[
        "generate-grid", "--lo", "0", "--hi", "3", "--n", "5", "--dims", "3", "--r", "2", "--model", "mz", "--out",
        s(&dir.path().join("d.txt")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(qmetro(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn compare_joins_and_checks_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    std::fs::write(&a, "N,qloss,dispersion\n1,0.8,0.1\n2,0.4,0.05\n").unwrap();
    std::fs::write(&b, "N,qloss,dispersion\n1,0.4,0.1\n2,0.3,0.05\n").unwrap();
    std::fs::write(&c, "N,qloss,dispersion\n3,0.4,0.1\n4,0.3,0.05\n").unwrap();

    let own = ok(qmetro(&["compare", "--runs", s(&a), s(&a)]));
    let text = String::from_utf8(own.stdout).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let ratio = header.iter().position(|h| *h == "ratio_a_1").unwrap();
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').nth(ratio), Some("1"));
    }

    let joined = dir.path().join("joined.csv");
    ok(qmetro(&["compare", "--runs", s(&a), s(&b), "--bound", "2.5", "--out", s(&joined)]));
    let text = std::fs::read_to_string(&joined).unwrap();
    assert_eq!(text.lines().next().unwrap().matches("qloss_").count(), 2);
    assert_eq!(text.lines().count(), 3);

    let out = qmetro(&["compare", "--runs", s(&a), s(&c)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("alignment"));
}
