mod common;

use std::fs;

use serde_json::json;
use tabmia::harness::{emit_report, load_report, run_experiment, AttackKind, MetricKind, SweepAxis};

#[test]
fn sweep_report_has_every_cell_and_attack() {
    let cfg = common::tiny_experiment(SweepAxis::TrainSteps, vec![json!(10), json!(40), json!(80)]);
    let report = run_experiment(&cfg, None).unwrap();
    assert_eq!(report.cells.len(), 3);
    assert_eq!(report.n_failed(), 0, "{:#?}", report.cells);
    for c in &report.cells {
        assert_eq!(c.attacks.len(), 3);
        for kind in [AttackKind::TfWhite, AttackKind::TfBlack, AttackKind::Ensemble] {
            let tpr = c.tpr(kind).unwrap();
            assert!((0.0..=1.0).contains(&tpr));
        }
        assert!(c.heuristics.as_ref().unwrap().ok().is_some());
        assert!(c.quality.as_ref().unwrap().ok().is_some());
        assert!(c.divergence.as_ref().unwrap().ok().is_some());
    }

    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    for attack in ["tf_white", "tf_black", "ensemble"] {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(2) == Some(attack)).count(), 3);
    }
    assert!(rows.iter().all(|r| r.split(',').nth(3) == Some("ok")));
    for f in ["tpr_at_fpr.csv", "heuristics.csv", "quality.csv", "divergence.csv"] {
        let text = fs::read_to_string(dir.path().join("plotdata").join(f)).unwrap();
        assert_eq!(text.lines().count(), 4, "{f}");
    }
    assert_eq!(load_report(&dir.path().join("report.json")).unwrap(), report);
}

#[test]
fn cached_rerun_is_byte_identical() {
    let mut cfg = common::tiny_experiment(SweepAxis::SynthMultiple, vec![json!(1), json!(2)]);
    cfg.attacks = vec![AttackKind::TfWhite];
    cfg.metrics = vec![MetricKind::Heuristics];
    let cache = tempfile::tempdir().unwrap();
    let a = run_experiment(&cfg, Some(cache.path())).unwrap();
    assert_eq!(fs::read_dir(cache.path()).unwrap().count(), 2);
    let b = run_experiment(&cfg, Some(cache.path())).unwrap();
    let fresh = run_experiment(&cfg, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, fresh);

    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_report(&a, d1.path()).unwrap();
    emit_report(&fresh, d2.path()).unwrap();
    for f in ["cells.csv", "report.json"] {
        assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap());
    }
}

#[test]
fn failed_cells_are_recorded() {
    let mut cfg = common::tiny_experiment(SweepAxis::TrainSize, vec![json!(30), json!(100_000)]);
    cfg.attacks = vec![AttackKind::TfWhite];
    cfg.metrics = vec![];
    let report = run_experiment(&cfg, None).unwrap();
    assert_eq!(report.n_failed(), 1);
    assert!(report.cell("100000").unwrap().setup_error.is_some());
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    let statuses: Vec<&str> = csv.lines().skip(1).map(|r| r.split(',').nth(3).unwrap()).collect();
    assert_eq!(statuses, vec!["ok", "failed"]);
}

#[test]
fn mismatch_and_ablation_axes_run() {
    let mut cfg = common::tiny_experiment(
        SweepAxis::DataMismatch,
        vec![json!("none"), json!("permute_marginals"), json!("uniform_noise"), json!("disjoint_units")],
    );
    cfg.attacks = vec![AttackKind::TfWhite];
    cfg.metrics = vec![MetricKind::Divergence];
    let report = run_experiment(&cfg, None).unwrap();
    assert_eq!(report.n_failed(), 0, "{:#?}", report.cells);

    let mut cfg = common::tiny_experiment(SweepAxis::EnsembleAblation, vec![json!("distance"), json!("domias+rmia")]);
    cfg.attacks = vec![AttackKind::Ensemble];
    cfg.metrics = vec![];
    assert_eq!(run_experiment(&cfg, None).unwrap().n_failed(), 0);
}
