use std::path::Path;

use homlat_core::analysis::ErrorSeries;
use homlat_lab::cache::{load_or_compute, Source};
use homlat_lab::config::ExperimentConfig;
use homlat_lab::csv::{body_lines, partial_path, read_series, SeriesWriter};
use homlat_lab::runner::{metadata, metric, run_sweep, RunOptions};
use homlat_lab::snapshot::{read_snapshot, sidecar_path};
use homlat_lab::table::table_row;

fn config(json: &str) -> ExperimentConfig {
    serde_json::from_str(json).unwrap()
}

fn small_iid() -> ExperimentConfig {
    config(
        r#"{
            "schema_version": 1,
            "name": "small_iid",
            "model": { "kind": "iid_two_point", "low": 0.5, "high": 1.5 },
            "dim": 2,
            "epsilons": [0.5, 0.25],
            "realizations": 2,
            "seed": 7,
            "initial_data": "paper-sech-pair",
            "sample_count": 5,
            "snapshots": { "epsilon": 0.5, "taus": [0.5, 1.0] }
        }"#,
    )
}

fn opts(dir: &Path) -> RunOptions {
    RunOptions { out_dir: dir.to_path_buf(), quiet: true, ..RunOptions::default() }
}

#[test]
fn reruns_are_bit_identical() {
    let cfg = small_iid();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_sweep(&cfg, &opts(a.path())).unwrap();
    assert!(first.passed(), "{:?}", first.checks);
    // a different thread count must not change a single bit
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let second = pool.install(|| run_sweep(&cfg, &opts(b.path()))).unwrap();
    assert_eq!(body_lines(&first.csv).unwrap(), body_lines(&second.csv).unwrap());
    let meta = &read_series(&first.csv).unwrap().series.metadata;
    assert_eq!(meta.get("config_hash"), Some(&cfg.hash()));
    assert_eq!(meta.get("status").map(String::as_str), Some("complete"));
}

#[test]
fn interrupted_sweeps_resume() {
    let cfg = small_iid();
    let dir = tempfile::tempdir().unwrap();
    let full = run_sweep(&cfg, &opts(dir.path())).unwrap();
    let expected = body_lines(&full.csv).unwrap();

    // leave only the first finished ε block behind, as a crash would
    std::fs::remove_file(&full.csv).unwrap();
    let first = cfg.sweep_order()[0];
    let rows: Vec<_> = full.series.records.iter().filter(|r| r.epsilon == first).cloned().collect();
    let mut w = SeriesWriter::create(&full.csv, &metadata(&cfg)).unwrap();
    w.write_block(first, &rows).unwrap();
    drop(w);
    let partial = read_series(&partial_path(&full.csv)).unwrap();
    assert_eq!(partial.complete, vec![first]);
    assert_eq!(partial.series.metadata.get("status").map(String::as_str), Some("incomplete"));

    let resumed = run_sweep(&cfg, &opts(dir.path())).unwrap();
    assert_eq!(resumed.resumed, vec![first]);
    assert!(!partial_path(&full.csv).exists());
    assert_eq!(body_lines(&resumed.csv).unwrap(), expected);

    // a complete file with the same hash is reused as is
    let again = run_sweep(&cfg, &opts(dir.path())).unwrap();
    assert_eq!(again.resumed, cfg.epsilons);
}

#[test]
fn over_budget_runs_need_an_override() {
    let mut cfg = small_iid();
    cfg.epsilons = vec![0.5];
    cfg.budget.max_site_steps = 10.0;
    let dir = tempfile::tempdir().unwrap();
    let err = run_sweep(&cfg, &opts(dir.path())).unwrap_err();
    assert!(format!("{err}").contains("override"), "{err}");
    assert!(!dir.path().join("small_iid.csv").exists());
    let forced = RunOptions { override_budget: true, ..opts(dir.path()) };
    assert!(run_sweep(&cfg, &forced).is_ok());
}

#[test]
fn invalid_configs_fail_before_running() {
    let mut cfg = small_iid();
    cfg.dt_factor = 0.9;
    let dir = tempfile::tempdir().unwrap();
    assert!(run_sweep(&cfg, &opts(dir.path())).is_err());
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn constant_masses_have_no_random_terms() {
    let cfg = config(
        r#"{
            "schema_version": 1,
            "name": "flat",
            "model": { "kind": "constant", "value": 1.0 },
            "dim": 2,
            "epsilons": [0.5, 0.25],
            "realizations": 1,
            "initial_data": "paper-sech-pair",
            "sample_count": 5
        }"#,
    );
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&cfg, &opts(dir.path())).unwrap();
    let series: ErrorSeries = read_series(&out.csv).unwrap().series;
    assert_eq!(series.epsilons(), vec![0.5, 0.25]);
    for m in [metric::TERMS[1], metric::TERMS[2], metric::TERMS[3], metric::TERMS[4], metric::PDE] {
        let v = series.values(m);
        assert_eq!(v.len(), 2, "{m}");
        assert!(v.iter().all(|(_, x)| *x == 0.0), "{m}: {v:?}");
    }
    assert!(series.values(metric::TERMS[0]).iter().all(|(_, x)| *x > 0.0));
}

#[test]
fn single_epsilon_sweeps_are_not_tabulated() {
    let mut cfg = small_iid();
    cfg.epsilons = vec![0.5];
    cfg.snapshots = None;
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&cfg, &opts(dir.path())).unwrap();
    assert!(table_row(&out.series).is_err());
}

#[test]
fn snapshots_carry_their_sidecar() {
    let cfg = small_iid();
    let dir = tempfile::tempdir().unwrap();
    run_sweep(&cfg, &opts(dir.path())).unwrap();
    let snaps: Vec<_> = std::fs::read_dir(dir.path().join("snapshots"))
        .unwrap()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "f64"))
        .collect();
    assert_eq!(snaps.len(), 2);
    for p in &snaps {
        let (field, meta) = read_snapshot(p).unwrap();
        assert_eq!(meta.config_hash, cfg.hash());
        assert_eq!(meta.realization, 0);
        assert_eq!(meta.epsilon, 0.5);
        assert_eq!(field.window().shape(), meta.shape);
        assert!(field.max_abs() > 0.0);
    }
    std::fs::remove_file(sidecar_path(&snaps[0])).unwrap();
    assert!(read_snapshot(&snaps[0]).is_err());
}

#[test]
fn green_tables_come_back_from_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let (a, s1) = load_or_compute(dir.path(), 2, 24, 1e-10).unwrap();
    let (b, s2) = load_or_compute(dir.path(), 2, 24, 1e-10).unwrap();
    assert_eq!((s1, s2), (Source::Computed, Source::Cache));
    assert_eq!(a.values().values(), b.values().values());
    // a smaller request is cut from the stored table
    let (c, s3) = load_or_compute(dir.path(), 2, 10, 1e-10).unwrap();
    assert_eq!(s3, Source::Cache);
    assert_eq!(c.radius(), 10);
    assert_eq!(c.value([3, -4]), a.value([3, -4]));
}
