//! End-to-end runs on tiny synthetic datasets.

use std::path::Path;

use kgtrust::experiment::fixtures::{write_filmtrust_fixture, write_siot_fixture, FilmTrustFixture, SiotFixture};
use kgtrust::experiment::{
    ablate, append_metrics, config_diff, run, sweep, ExperimentConfig, SweepParam, Variant, METRICS_HEADER,
};
use kgtrust::par::Execution;

fn siot_config(dir: &Path) -> ExperimentConfig {
    write_siot_fixture(dir, &SiotFixture::small()).unwrap();
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("dataset.kind", "siot"),
        ("dataset.min_user_comments", "5"),
        ("dataset.min_object_comments", "2"),
        ("triples.enabled", "true"),
        ("runs", "2"),
        ("epochs", "4"),
        ("input_dim", "8"),
        ("latent_dim", "8"),
        ("doc.dim", "8"),
        ("doc.epochs", "3"),
        ("triples.transe.dim", "8"),
        ("triples.transe.epochs", "10"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.dataset.path = dir.to_path_buf();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn repeated_runs_write_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = siot_config(&dir.path().join("data"));
    let a = run(&cfg, "full", Execution::default()).unwrap();
    let b = run(&cfg, "full", Execution::Sequential).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.trace, b.trace);

    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    append_metrics(&pa, &a.rows).unwrap();
    append_metrics(&pb, &b.rows).unwrap();
    let text = std::fs::read(&pa).unwrap();
    assert_eq!(text, std::fs::read(&pb).unwrap());
    let text = String::from_utf8(text).unwrap();
    assert_eq!(text.lines().next(), Some(METRICS_HEADER));
    assert_eq!(text.lines().count(), 1 + cfg.runs + 1);

    // appending keeps a single header
    append_metrics(&pa, &a.rows).unwrap();
    let text = std::fs::read_to_string(&pa).unwrap();
    assert_eq!(text.lines().filter(|l| *l == METRICS_HEADER).count(), 1);
}

#[test]
fn every_ablation_changes_one_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = siot_config(dir.path());
    for v in Variant::ABLATIONS {
        let changed = v.apply(&cfg).unwrap();
        assert_eq!(config_diff(&cfg, &changed).len(), 1, "{}", v.name());
    }
    let mut bare = cfg.clone();
    bare.triples.enabled = false;
    assert!(Variant::WoTriples.apply(&bare).is_err());
}

#[test]
fn without_trustor_matches_trustee_only_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = siot_config(dir.path());
    let ablated = ablate(&cfg, Variant::WoTrustor, Execution::default()).unwrap();
    let mut direct = cfg.clone();
    direct.set("roles.trustor_enabled", "false").unwrap();
    let plain = run(&direct, "woTrustor", Execution::default()).unwrap();
    assert_eq!(ablated.rows, plain.rows);
    assert!(ablated.params.trustor.is_none() && ablated.params.gate.is_none());
}

#[test]
fn single_value_sweep_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = siot_config(dir.path());
    let rows = sweep(&cfg, SweepParam::PprK, &[cfg.ppr.k as f64], Execution::default()).unwrap();
    assert_eq!(rows.len(), 1);
    let direct = run(&cfg, "full", Execution::default()).unwrap();
    let mean = direct.rows.last().unwrap();
    assert_eq!((rows[0].accuracy, rows[0].f1), (mean.accuracy, mean.f1));
    assert_eq!(rows[0].variant, format!("ppr_k={}", cfg.ppr.k));
}

#[test]
fn filmtrust_fixture_runs_with_learned_inputs() {
    let dir = tempfile::tempdir().unwrap();
    write_filmtrust_fixture(dir.path(), &FilmTrustFixture::default()).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.path = dir.path().to_path_buf();
    cfg.set("runs", "1").unwrap();
    cfg.set("epochs", "3").unwrap();
    cfg.set("latent_dim", "8").unwrap();
    cfg.set("input_dim", "8").unwrap();
    let report = run(&cfg, "full", Execution::default()).unwrap();
    assert!(report.params.inputs.is_some());
    let m = report.mean;
    assert!((0.0..=1.0).contains(&m.accuracy) && (0.0..=1.0).contains(&m.f1));
}
