use std::path::Path;
use std::process::{Command, Output};

fn bookrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bookrec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path) {
    let out = bookrec(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--customers",
        "30",
        "--books",
        "40",
        "--genres",
        "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

/// Shrinks training so the CLI tests stay fast.
fn quick_config(dir: &Path) -> String {
    let path = dir.join("quick.json");
    std::fs::write(
        &path,
        r#"{"lda": {"num_topics": 4, "gibbs_iterations": 40, "burn_in": 5}, "lfm": {"epochs": 15}, "evaluation": {"neighborhood_sizes": [5]}}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let config = quick_config(dir.path());

    let out = bookrec(&["ingest", "--config", &config]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bookrec(&["train", "--config", &config]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("model/model.json").is_file());

    let out = bookrec(&[
        "recommend",
        "--config",
        &config,
        "--customers",
        "c01,c02",
        "--top-n",
        "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "customer_id,rank,book_id,score");
    assert_eq!(lines.len(), 1 + 2 * 4);

    let report = dir.path().join("rep");
    let out = bookrec(&["evaluate", "--config", &config, "--out", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(report.join("metrics.csv").is_file());
    assert!(report.join("precision.svg").is_file());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let config = quick_config(dir.path());
    let train = |seed: &str, out: &str| {
        let o = dir.path().join(out);
        let status = bookrec(&[
            "train",
            "--config",
            &config,
            "--seed",
            seed,
            "--out",
            o.to_str().unwrap(),
        ]);
        assert!(status.status.success());
        std::fs::read(o.join("model.json")).unwrap()
    };
    let a = train("1", "a");
    let b = train("1", "b");
    let c = train("2", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    assert_eq!(
        bookrec(&["train", "--config", missing.to_str().unwrap()]).status.code(),
        Some(1)
    );

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"lfm": {"lamda": 0.1}}"#).unwrap();
    assert_eq!(
        bookrec(&["train", "--config", bad.to_str().unwrap()]).status.code(),
        Some(1)
    );

    assert_eq!(bookrec(&["train"]).status.code(), Some(1));
    assert_eq!(bookrec(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        bookrec(&["synth", "--out", dir.path().to_str().unwrap(), "--genres", "0"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let config = quick_config(dir.path());
    // no model trained yet
    let out = bookrec(&["recommend", "--config", &config, "--customers", "c01"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train"));
}

#[test]
fn help_exits_zero() {
    assert_eq!(bookrec(&["--help"]).status.code(), Some(0));
    assert_eq!(bookrec(&["synth", "--help"]).status.code(), Some(0));
}
