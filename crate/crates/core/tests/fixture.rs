//! The bundled 200-row fixture: byte-stable regeneration and an end-to-end
//! run whose stage counts match the generator's recorded truth.
//!
//! `REPAYFACTOR_BLESS=1 cargo test --test fixture` rewrites the bundled files.

use std::path::{Path, PathBuf};

use repayfactor::pipeline::{self, RunStatus};
use repayfactor::synth::{self, FixtureTruth, SynthSpec};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic200")
}

fn spec() -> SynthSpec {
    SynthSpec {
        n_rows: 200,
        n_features: 24,
        n_true: 4,
        noise_sd: 0.2,
        seed: 7,
    }
}

const FILES: [&str; 4] = ["dictionary.csv", "MERGED2012.csv", "MERGED2013.csv", "truth.json"];

#[test]
fn bundled_fixture_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    synth::write_fixture(tmp.path(), &spec(), 500, 0.10).unwrap();
    if std::env::var_os("REPAYFACTOR_BLESS").is_some() {
        for f in FILES {
            std::fs::copy(tmp.path().join(f), fixture_dir().join(f)).unwrap();
        }
    }
    for f in FILES {
        let fresh = std::fs::read(tmp.path().join(f)).unwrap();
        let bundled = std::fs::read(fixture_dir().join(f)).unwrap();
        assert!(fresh == bundled, "{f} differs from the bundled copy");
    }
}

#[test]
fn run_matches_recorded_truth() {
    let truth: FixtureTruth =
        serde_json::from_slice(&std::fs::read(fixture_dir().join("truth.json")).unwrap()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = pipeline::validate_config(&fixture_dir().join("run.toml")).unwrap();
    cfg.out_dir = tmp.path().join("out");
    let m = pipeline::run_pipeline(&cfg).unwrap();
    assert_eq!(m.status, RunStatus::Complete, "{:?}", m.error);

    let ingest = m.stage("ingest").unwrap();
    assert_eq!((ingest.rows, ingest.cols), (Some(truth.ingested_rows), Some(truth.ingested_features)));
    let screen = m.stage("screen").unwrap();
    assert_eq!((screen.rows, screen.cols), (Some(truth.screened_rows), Some(truth.screened_features)));
    assert_eq!(m.inputs.len(), 3);
    for a in &m.artifacts {
        assert!(cfg.out_dir.join(&a.path).exists(), "{}", a.path);
    }
    assert!(cfg.out_dir.join(pipeline::MANIFEST_FILE).exists());

    // a rerun reproduces every digest
    let again = pipeline::run_pipeline(&cfg).unwrap();
    assert_eq!(m.without_timings(), again.without_timings());
}

#[test]
fn failed_stage_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = pipeline::validate_config(&fixture_dir().join("run.toml")).unwrap();
    cfg.out_dir = tmp.path().to_path_buf();
    cfg.target_name = "NOT_A_COLUMN".into();
    let m = pipeline::run_pipeline(&cfg).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert_eq!(m.failed_stage.as_deref(), Some("screen"));
    assert!(m.artifacts.iter().any(|a| a.path == "table.csv"));
    assert!(tmp.path().join(pipeline::MANIFEST_FILE).exists());
}
