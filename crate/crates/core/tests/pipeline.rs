use std::fs;
use std::path::Path;

use bookrec::pipeline::{
    cmd_evaluate, cmd_ingest, cmd_recommend, cmd_synth, cmd_train, load_model, BundleError, ModelBundle,
    PipelineConfig, PipelineError, SynthParams, MODEL_FILE, RECOMMENDATIONS_FILE, SUMMARY_FILE,
};

fn small_params(seed: u64) -> SynthParams {
    SynthParams {
        customers: 40,
        books: 60,
        genres: 3,
        seed,
        ..SynthParams::default()
    }
}

fn quick_config(dir: &Path) -> PipelineConfig {
    let mut config = PipelineConfig::load(&dir.join("config.json")).unwrap();
    config.lda.gibbs_iterations = 50;
    config.lda.burn_in = 10;
    config.lfm.epochs = 20;
    config.evaluation.neighborhood_sizes = vec![5, 10];
    config
}

fn trained(seed: u64) -> (tempfile::TempDir, PipelineConfig, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small_params(seed), dir.path()).unwrap();
    let config = quick_config(dir.path());
    let path = cmd_train(&config, None).unwrap();
    let bytes = fs::read(path).unwrap();
    (dir, config, bytes)
}

fn edit(bytes: &[u8], f: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    f(&mut v);
    serde_json::to_vec(&v).unwrap()
}

#[test]
fn synth_rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_synth(&small_params(3), a.path()).unwrap();
    cmd_synth(&small_params(3), b.path()).unwrap();
    for name in ["transactions.csv", "catalog.csv", "profiles.csv", "config.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn ingest_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small_params(4), dir.path()).unwrap();
    let config = quick_config(dir.path());
    let out = dir.path().join("ingest");
    let summary = cmd_ingest(&config, Some(&out)).unwrap();
    assert!(out.join(SUMMARY_FILE).is_file());
    let text = fs::read_to_string(out.join(SUMMARY_FILE)).unwrap();
    assert_eq!(
        serde_json::to_value(&summary).unwrap(),
        serde_json::from_str::<serde_json::Value>(&text).unwrap()
    );
}

#[test]
fn bundle_error_kinds() {
    let (_dir, _config, bytes) = trained(5);
    ModelBundle::from_bytes(&bytes).unwrap();

    let future = edit(&bytes, |v| v["format_version"] = 999.into());
    assert!(matches!(
        ModelBundle::from_bytes(&future),
        Err(BundleError::Version { found: 999, .. })
    ));

    let short_row = edit(&bytes, |v| {
        v["lda"]["phi"]["data"][1].as_array_mut().unwrap().pop();
    });
    match ModelBundle::from_bytes(&short_row) {
        Err(e @ BundleError::Dimension { row: 1, .. }) => assert!(e.to_string().contains("phi row 1")),
        other => panic!("expected a dimension error, got {other:?}"),
    }

    let cut = &bytes[..bytes.len() / 2];
    assert!(matches!(ModelBundle::from_bytes(cut), Err(BundleError::Truncated(_))));
    assert!(matches!(
        ModelBundle::from_bytes(b"[1, 2"),
        Err(BundleError::Truncated(_))
    ));
    assert!(matches!(
        ModelBundle::from_bytes(b"{\"x\": }"),
        Err(BundleError::Malformed(_))
    ));
}

#[test]
fn round_trip_is_exact() {
    let (dir, _config, bytes) = trained(6);
    let bundle = load_model(&dir.path().join("model").join(MODEL_FILE)).unwrap();
    assert_eq!(bundle.to_bytes(), bytes);
    assert_eq!(ModelBundle::from_bytes(&bundle.to_bytes()).unwrap(), bundle);
}

#[test]
fn recommendations_come_from_the_catalog() {
    let (dir, config, _) = trained(7);
    let bundle = load_model(&dir.path().join("model").join(MODEL_FILE)).unwrap();
    let customers: Vec<String> = bundle.lfm.customers().ids().iter().take(3).cloned().collect();
    let out = dir.path().join("recs");
    let recs = cmd_recommend(&config, &customers, 10, Some(&out)).unwrap();
    assert_eq!(recs.len(), 3);
    let csv = fs::read_to_string(out.join(RECOMMENDATIONS_FILE)).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 30);
    for row in rows {
        let book = row.split(',').nth(2).unwrap();
        assert!(bundle.books.contains(book), "{book} is not in the catalog");
    }
    for rec in &recs {
        let bought = &bundle.train_purchases[&rec.customer];
        assert!(rec.items.iter().all(|i| !bought.contains(&i.book)));
    }
}

#[test]
fn unknown_customer_gets_a_cold_list() {
    let (_dir, config, _) = trained(8);
    let recs = cmd_recommend(&config, &["nobody".to_string()], 5, None).unwrap();
    assert!(recs[0].cold);
    assert_eq!(recs[0].items.len(), 5);
}

#[test]
fn evaluate_emits_report() {
    let (dir, config, _) = trained(9);
    let out = dir.path().join("report");
    let report = cmd_evaluate(&config, Some(&out)).unwrap();
    // 2 methods x 2 neighborhoods x 2 list sizes
    assert_eq!(report.cells.len(), 8);
    for name in ["metrics.csv", "report.json", "precision.svg", "recall.svg", "f.svg"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn missing_model_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small_params(10), dir.path()).unwrap();
    let config = quick_config(dir.path());
    let err = cmd_recommend(&config, &["c0".to_string()], 5, None).unwrap_err();
    assert!(matches!(err, PipelineError::MissingArtifact(_)));
    assert!(!err.is_validation());
}

#[test]
fn missing_inputs_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = PipelineConfig::default();
    config.resolve_paths(dir.path());
    let err = cmd_train(&config, None).unwrap_err();
    assert!(err.is_validation(), "{err}");
}
