use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use uwoc_core::linksim::{read_sweep_csv, throughput, LinkConfig};
use uwoc_core::phy::OfdmParams;

fn uwoc(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_uwoc"));
    cmd.args(args).env_remove("UWOC_SEED");
    if let Some(s) = env_seed {
        cmd.env("UWOC_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON in {text}"));
    serde_json::from_str(line).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A config small enough for a few seconds of simulation.
fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.json");
    let cfg = serde_json::json!({
        "seed": 5,
        "sweep": { "speeds": [0.1, 0.5], "distances": [4.0, 20.0, 34.0], "repeats": 1, "configs": [1, 3, 6], "n_frames": 2 },
        "dataset": { "speeds": [0.1, 0.5], "distances": [3.0, 12.0, 20.0, 26.0, 31.0, 36.0], "repeats": 2, "n_frames": 2 },
        "classifier": { "batch_size": 8 },
        "outputs": { "report_dir": s(&dir.join("report")) }
    });
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn usage_errors_exit_with_two() {
    ok(&uwoc(&["--help"], None));
    assert_eq!(uwoc(&[], None).status.code(), Some(2));
    assert_eq!(uwoc(&["sweep", "--frobnicate"], None).status.code(), Some(2));
}

#[test]
fn config_errors_point_at_the_offending_value() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"sweep": {"n_frames": "many"}}"#, "/sweep/n_frames"),
        (r#"{"sweep": {"speeds": [0.1, null]}}"#, "/sweep/speeds/1"),
        (r#"{"ofdm": {"fft_size": 32, "guard": 1}}"#, "/ofdm"),
        (r#"{"switchopt": {"candidates": ["lstm", "rnn"]}}"#, "/switchopt/candidates/1"),
        (r#"{"switchopt": {"beta": 7}}"#, "/switchopt"),
        (r#"{"coverage_threshold": 0}"#, "/coverage_threshold"),
    ];
    for (text, pointer) in cases {
        let path = dir.path().join("bad.json");
        fs::write(&path, text).unwrap();
        let out = uwoc(&["--config", s(&path), "sweep", "--out", s(&dir.path().join("x.csv"))], None);
        assert_eq!(out.status.code(), Some(2), "{text}");
        let err = stderr_json(&out);
        assert_eq!(err["error"], "config");
        assert!(err["pointer"].as_str().unwrap().starts_with(pointer), "{text}: {err}");
    }
    let out = uwoc(&["--config", s(&dir.path().join("absent.json")), "sweep"], None);
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.path().join("trunc.json"), "{\"seed\": ").unwrap();
    assert_eq!(uwoc(&["--config", s(&dir.path().join("trunc.json")), "sweep"], None).status.code(), Some(2));
}

#[test]
fn name_typos_list_the_valid_values() {
    let out = uwoc(&["train", "--task", "b1", "--classifier", "lstn"], None);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("lstm, bilstm, gru, tree, adaboost, svm"), "{text}");
    let out = uwoc(&["train", "--task", "b4", "--classifier", "lstm"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("b1, b2, b3, c3, c6"));
    let out = uwoc(&["report", "--emit", "fers"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_inputs_are_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.csv");
    let out = uwoc(&["train", "--dataset", s(&missing), "--task", "b1", "--classifier", "tree"], None);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["path"], s(&missing));
    let out = uwoc(&["report", "--sweep", s(&missing), "--out-dir", s(dir.path())], None);
    assert_eq!(out.status.code(), Some(3));
    fs::write(&missing, "config,nf\n1,1\n").unwrap();
    let out = uwoc(&["report", "--sweep", s(&missing), "--out-dir", s(dir.path())], None);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["line"], 1);
}

#[test]
fn sweep_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = |name: &str, extra: &[&str], env: Option<&str>| {
        let csv = dir.path().join(format!("{name}.csv"));
        let summary = dir.path().join(format!("{name}.json"));
        let mut args = vec!["--config", s(&cfg), "sweep", "--out", s(&csv), "--summary", s(&summary)];
        args.extend_from_slice(extra);
        ok(&uwoc(&args, env));
        (fs::read(&csv).unwrap(), serde_json::from_slice::<Value>(&fs::read(&summary).unwrap()).unwrap())
    };
    let (a, summary) = run("a", &["--frames", "1", "--parallelism", "1"], None);
    let rows = read_sweep_csv(&a[..], Path::new("a.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 3 * 3);
    assert!(rows.iter().all(|r| r.n_frames == 1 && (r.fer == 0.0 || r.fer == 1.0)));
    assert_eq!(summary["coverage"].as_array().unwrap().len(), 3 * 2);
    assert_eq!(summary["fer_threshold"], 0.1);
    assert_eq!(summary["seed"], 5);

    assert!(run("b", &["--frames", "1", "--parallelism", "1"], None).0 == a);
    assert!(run("c", &["--frames", "1", "--parallelism", "3"], None).0 == a);
    assert!(run("d", &["--frames", "1"], Some("5")).0 == a);

    // sweep outcomes at one frame are near-deterministic, the dataset features are not
    let data = |name: &str, extra: &[&str], env: Option<&str>| {
        let csv = dir.path().join(format!("{name}.csv"));
        let mut args = vec!["--config", s(&cfg), "dataset", "--frames", "1", "--out", s(&csv)];
        args.extend_from_slice(extra);
        ok(&uwoc(&args, env));
        fs::read(&csv).unwrap()
    };
    let base = data("g", &[], None);
    assert!(data("h", &[], Some("5")) == base);
    let other = data("i", &[], Some("6"));
    assert!(other != base);
    assert!(data("j", &["--seed", "6"], Some("5")) == other);

    let out = uwoc(&["--config", s(&cfg), "sweep", "--frames", "1"], Some("six"));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["pointer"], "/seed");
}

#[test]
fn dataset_train_switchopt_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data.csv");
    let sweep = dir.path().join("sweep.csv");
    ok(&uwoc(&["--config", s(&cfg), "dataset", "--out", s(&data), "--sweep-out", s(&sweep)], None));
    let text = fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 6 * 2);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 5 + 128);
    let again = dir.path().join("again.csv");
    ok(&uwoc(&["--config", s(&cfg), "dataset", "--out", s(&again), "--parallelism", "2"], None));
    assert_eq!(fs::read(&again).unwrap(), text.as_bytes());

    let metrics = dir.path().join("lstm.json");
    ok(&uwoc(
        &[
            "--config", s(&cfg), "train", "--dataset", s(&data), "--task", "c6", "--classifier", "lstm",
            "--hidden", "8", "--epochs", "3", "--folds", "2", "--out", s(&metrics),
        ],
        None,
    ));
    let m: Value = serde_json::from_slice(&fs::read(&metrics).unwrap()).unwrap();
    for key in ["accuracy", "precision", "recall", "specificity", "f1"] {
        let v = m[key].as_f64().unwrap_or_else(|| panic!("{key} in {m}"));
        assert!((0.0..=1.0).contains(&v));
    }
    assert_eq!(m["accuracy_by_epoch"].as_array().unwrap().len(), 3);
    assert_eq!(m["accuracy_by_epoch"][2]["accuracy"], m["accuracy"]);
    let tree = dir.path().join("tree.json");
    ok(&uwoc(&["--config", s(&cfg), "train", "--dataset", s(&data), "--task", "c6", "--classifier", "tree", "--folds", "2", "--out", s(&tree)], None));

    let so = dir.path().join("so.json");
    ok(&uwoc(
        &[
            "--config", s(&cfg), "switchopt", "--dataset", s(&data), "--task", "c6", "--candidates", "gru,lstm",
            "--grid-nh", "4,8", "--grid-np", "1,2", "--beta", "1", "--folds", "2", "--out", s(&so),
        ],
        None,
    ));
    let r: Value = serde_json::from_slice(&fs::read(&so).unwrap()).unwrap();
    let best = r["trace"].as_array().unwrap().iter().map(|t| t["omega"].as_f64().unwrap()).fold(f64::MIN, f64::max);
    assert_eq!(r["omega"].as_f64().unwrap(), best);
    assert_eq!(r["metrics"]["accuracy"], r["omega"]);

    let report = dir.path().join("report");
    ok(&uwoc(
        &[
            "--config", s(&cfg), "report", "--sweep", s(&sweep), "--metrics", s(&metrics), "--metrics", s(&tree),
            "--switchopt", s(&so), "--out-dir", s(&report),
        ],
        None,
    ));
    let ofdm = OfdmParams::default();
    let tput = fs::read_to_string(report.join("throughput_vs_distance.csv")).unwrap();
    let mut zero_rows = 0;
    for line in tput.lines().skip(1) {
        let f: Vec<&str> = line.rsplitn(6, ',').collect();
        // reversed: throughput, fer, distance, speed, label, source+config
        let (tp, fer): (f64, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let config: usize = line.split(',').nth(1).unwrap().parse().unwrap();
        let cfg = LinkConfig::by_index(config).unwrap();
        let t_ofdm = (ofdm.fft_size + ofdm.cp_samples) as f64 / ofdm.sample_rate;
        let closed = 2.0 * 32.0 * cfg.rate.value() * (1.0 - fer) / (2 * cfg.nf * cfg.nt) as f64 / t_ofdm;
        assert!((tp - closed).abs() <= 1e-9 * closed.max(1.0), "{line}");
        if fer == 0.0 {
            zero_rows += 1;
            assert_eq!(tp, throughput(&cfg, &ofdm, 1, 0.0).unwrap());
        }
    }
    assert!(zero_rows > 0);
    let fer = fs::read_to_string(report.join("fer_vs_distance.csv")).unwrap();
    assert_eq!(fer.lines().count(), 1 + 6 * 2 * 6);
    let acc = fs::read_to_string(report.join("accuracy_vs_epochs.csv")).unwrap();
    assert!(acc.starts_with("source,origin,task,classifier,n_h,epoch,accuracy\n"));
    assert_eq!(acc.lines().filter(|l| l.contains(",train,")).count(), 3);
    assert!(acc.lines().any(|l| l.contains(",switchopt,C6,gru,")));

    let only = dir.path().join("only");
    ok(&uwoc(&["report", "--sweep", s(&sweep), "--emit", "fer", "--out-dir", s(&only)], None));
    assert!(only.join("fer_vs_distance.csv").exists() && !only.join("throughput_vs_distance.csv").exists());
}
