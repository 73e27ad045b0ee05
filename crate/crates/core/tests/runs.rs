use std::time::Instant;

use samgc::config::{DatasetKind, RunConfig};
use samgc::data::{format_metrics_csv, parse_metrics_csv};
use samgc::run;

/// Cora-sized synthetic citation data under the standard split.
fn cora_shaped(epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.set("dataset", "synthetic").unwrap();
    cfg.epochs = epochs;
    cfg.patience = 0;
    assert_eq!(cfg.dataset, DatasetKind::Synthetic);
    assert_eq!((cfg.synth_nodes, cfg.synth_features, cfg.synth_edges), (2708, 1433, 5278));
    cfg
}

#[test]
fn cora_shaped_run_is_byte_deterministic_and_round_trips() {
    let cfg = cora_shaped(3);
    let data = run::load_node_dataset(&cfg).unwrap();
    let start = Instant::now();
    let a = run::run_node(&cfg, &data).unwrap();
    let per_epoch = start.elapsed().as_secs_f64() / 3.0;
    // about 2 s on one core with fused edge ops; a loose regression guard
    assert!(per_epoch < 4.0, "{per_epoch:.2} s per epoch");

    let b = run::run_node(&cfg, &data).unwrap();
    let csv = format_metrics_csv(&a.rows, cfg.precision);
    assert_eq!(csv.as_bytes(), format_metrics_csv(&b.rows, cfg.precision).as_bytes());
    assert_eq!(parse_metrics_csv(&csv).unwrap().len(), 3 * 3);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    run::save_checkpoint(&a.model.store, &cfg, &path).unwrap();
    let (model, echoed) = run::load_node_model(&path, &data).unwrap();
    assert_eq!(echoed, cfg);
    assert_eq!(model.store.fingerprint(), a.model.store.fingerprint());
    let (val, test) = run::evaluate_node(&model, &cfg, &data).unwrap();
    assert_eq!((val, test), (a.report.val.clone(), a.report.test.clone()));
}
