use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use samgc::autodiff::{AdamConfig, ParamStore, Tape};
use samgc::data::{gen_synthetic_clouds, Shape, Split};
use samgc::graph::{exact_hop_sets, Graph};
use samgc::layer::{LayerSpec, Variant};
use samgc::models::{
    evaluate, train_cloud_epoch, train_epoch, train_node_classifier, CloudConfig, GsamgcModule,
    NodeClassifier, NodeConfig, NodeTask, PointCloudClassifier, TrainConfig,
};
use samgc::tensor::Tensor;

fn small_node_config(in_dim: usize, classes: usize) -> NodeConfig {
    let mut cfg = NodeConfig::new(in_dim, classes);
    cfg.hidden_dim = 16;
    cfg.re_dim = 4;
    cfg.nw_dim = 4;
    cfg
}

/// Two 10-node rings joined by one bridge; label = ring.
fn two_rings() -> (Graph, Vec<usize>) {
    let mut edges = Vec::new();
    for base in [0, 10] {
        for i in 0..10 {
            edges.push((base + i, base + (i + 1) % 10));
        }
        edges.push((base, base + 5));
    }
    edges.push((0, 10));
    let labels = (0..20).map(|i| i / 10).collect();
    (Graph::from_edges(20, &edges).unwrap(), labels)
}

#[test]
fn zero_features_give_uniform_predictions() {
    let (g, _) = two_rings();
    let hops = exact_hop_sets(&g, 2).unwrap();
    let model = NodeClassifier::new(small_node_config(5, 3), 1).unwrap();
    let logits = model.logits(&Tensor::zeros(20, 5), &g, &hops).unwrap();
    // every layer maps 0 to relu(0) and the head bias starts at zero
    assert!(logits.data().iter().all(|&v| v == 0.0));
}

#[test]
fn evaluation_mode_is_bitwise_repeatable() {
    let (g, _) = two_rings();
    let hops = exact_hop_sets(&g, 2).unwrap();
    let x = Tensor::glorot(20, 5, 3);
    let model = NodeClassifier::new(small_node_config(5, 2), 4).unwrap();
    let a = model.logits(&x, &g, &hops).unwrap();
    let b = model.logits(&x, &g, &hops).unwrap();
    assert_eq!(a.data(), b.data());
    let twin = NodeClassifier::new(small_node_config(5, 2), 4).unwrap();
    assert_eq!(twin.store.fingerprint(), model.store.fingerprint());
}

#[test]
fn zero_learning_rate_leaves_parameters_alone() {
    let (g, labels) = two_rings();
    let hops = exact_hop_sets(&g, 2).unwrap();
    let x = Tensor::glorot(20, 5, 5);
    let split = Split {
        train: (0..20).step_by(2).collect(),
        val: (1..20).step_by(4).collect(),
        test: (3..20).step_by(4).collect(),
    };
    let task = NodeTask {
        features: &x,
        graph: &g,
        hops: &hops,
        labels: &labels,
        num_classes: 2,
        split: &split,
    };
    let mut model = NodeClassifier::new(small_node_config(5, 2), 6).unwrap();
    let before = model.store.fingerprint();
    let adam = AdamConfig {
        lr: 0.0,
        ..AdamConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    train_epoch(&mut model, &task, &adam, &mut rng).unwrap();
    assert_eq!(model.store.fingerprint(), before);

    evaluate(&model, &task, &split.val).unwrap();
    assert_eq!(model.store.fingerprint(), before);
    assert_eq!(evaluate(&model, &task, &[]).unwrap_err().kind(), "contract");
}

#[test]
fn small_graph_is_fit_exactly() {
    let (g, labels) = two_rings();
    let hops = exact_hop_sets(&g, 2).unwrap();
    let x = Tensor::glorot(20, 6, 7);
    let split = Split {
        train: (0..20).filter(|i| i % 5 != 4).collect(),
        val: vec![4, 14],
        test: vec![9, 19],
    };
    let task = NodeTask {
        features: &x,
        graph: &g,
        hops: &hops,
        labels: &labels,
        num_classes: 2,
        split: &split,
    };
    let mut cfg = small_node_config(6, 2);
    cfg.dropout = 0.0;
    let mut model = NodeClassifier::new(cfg, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let adam = AdamConfig::default();
    let mut fitted = None;
    for epoch in 1..=200 {
        train_epoch(&mut model, &task, &adam, &mut rng).unwrap();
        if evaluate(&model, &task, &split.train).unwrap().oa == 1.0 {
            fitted = Some(epoch);
            break;
        }
    }
    assert!(fitted.is_some(), "training accuracy never reached 1");
}

#[test]
fn early_stopping_restores_the_best_snapshot() {
    let (g, labels) = two_rings();
    let hops = exact_hop_sets(&g, 2).unwrap();
    let x = Tensor::glorot(20, 6, 10);
    let split = Split {
        train: vec![0, 1, 10, 11],
        val: vec![2, 3, 4, 12, 13, 14],
        test: vec![5, 6, 7, 15, 16, 17],
    };
    let task = NodeTask {
        features: &x,
        graph: &g,
        hops: &hops,
        labels: &labels,
        num_classes: 2,
        split: &split,
    };
    let mut model = NodeClassifier::new(small_node_config(6, 2), 11).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        patience: Some(5),
        ..TrainConfig::default()
    };
    let report = train_node_classifier(&mut model, &task, &cfg).unwrap();
    let best = &report.history[report.best_epoch - 1];
    assert!(report.history.iter().all(|r| r.val.oa <= best.val.oa));
    let last = report.history.last().unwrap().epoch;
    assert!(last == 60 || last - report.best_epoch == 5);
    // the restored model reproduces the best epoch's validation metrics
    assert_eq!(report.val, evaluate(&model, &task, &split.val).unwrap());
    assert_eq!(report.val.oa, best.val.oa);
}

fn cloud_spec(c_in: usize) -> LayerSpec {
    LayerSpec::new(c_in, 6).with_dims(3, 3).with_hops(2)
}

#[test]
fn grouped_module_concatenates_groups() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let module = GsamgcModule::new(&mut store, "m", &[4, 4], &cloud_spec(3), &mut rng).unwrap();
    assert_eq!(module.output_width(), 12);

    // copy group 0's weights into group 1: same k, same weights, same half
    let ids0 = module.layers[0].param_ids();
    let ids1 = module.layers[1].param_ids();
    for (a, b) in ids0.iter().zip(&ids1) {
        let v = store.value(*a).clone();
        *store.get_mut(*b).value_mut() = v;
    }
    let pts = Tensor::glorot(30, 3, 13);
    let mut tape = Tape::new();
    let h = tape.constant(pts);
    let out = module.forward(&mut tape, &store, h).unwrap();
    let y = tape.value(out);
    assert_eq!(y.shape(), (30, 12));
    for r in 0..30 {
        assert_eq!(&y.row(r)[..6], &y.row(r)[6..]);
    }
}

#[test]
fn grouped_module_rebuilds_graphs_from_its_input() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let module = GsamgcModule::new(&mut store, "m", &[3, 6], &cloud_spec(3), &mut rng).unwrap();
    let a = Tensor::glorot(25, 3, 15);
    let b = Tensor::glorot(25, 3, 16);
    let mut tape = Tape::new();
    let (ha, hb) = (tape.constant(a), tape.constant(b));
    let (_, ga) = module.forward_with_graphs(&mut tape, &store, ha).unwrap();
    let (_, gb) = module.forward_with_graphs(&mut tape, &store, hb).unwrap();
    assert_eq!(ga.len(), 2);
    assert!(ga[0].num_edges() < ga[1].num_edges());
    assert_ne!(ga[0].edges(), gb[0].edges());

    let tiny = tape.constant(Tensor::glorot(5, 3, 17));
    assert_eq!(module.forward(&mut tape, &store, tiny).unwrap_err().kind(), "config");
}

fn toy_cloud_model(seed: u64) -> PointCloudClassifier {
    let mut cfg = CloudConfig::new(2);
    cfg.k_list = vec![4, 6];
    cfg.group_width = 4;
    cfg.re_dim = 3;
    cfg.nw_dim = 3;
    PointCloudClassifier::new(cfg, seed).unwrap()
}

#[test]
fn phase_readout_is_max_and_mean_then_linear() {
    let model = toy_cloud_model(18);
    let phase = &model.phases[0];
    let w = model.store.value(phase.readout_w).clone();
    let b = model.store.value(phase.readout_b).clone();
    let width = w.rows() / 2;

    let linear = |pooled: &[f64]| -> Vec<f64> {
        (0..w.cols())
            .map(|k| b.get(0, k) + (0..w.rows()).map(|r| pooled[r] * w.get(r, k)).sum::<f64>())
            .collect()
    };
    let run = |h: &Tensor| {
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone());
        let z = model.phase_readout(&mut tape, phase, hv).unwrap();
        tape.value(z).row(0).to_vec()
    };

    let single = Tensor::glorot(1, width, 19);
    let pooled: Vec<f64> = single.row(0).iter().chain(single.row(0)).copied().collect();
    let got = run(&single);
    for (g, e) in got.iter().zip(linear(&pooled)) {
        assert!((g - e).abs() < 1e-12);
    }

    let two = Tensor::glorot(2, width, 20);
    let mut pooled: Vec<f64> = (0..width).map(|j| two.get(0, j).max(two.get(1, j))).collect();
    pooled.extend((0..width).map(|j| 0.5 * (two.get(0, j) + two.get(1, j))));
    for (g, e) in run(&two).iter().zip(linear(&pooled)) {
        assert!((g - e).abs() < 1e-12);
    }

    let many = Tensor::glorot(7, width, 21);
    let shuffled = many.select_rows(&[3, 6, 0, 2, 5, 1, 4]);
    for (a, b) in run(&many).iter().zip(run(&shuffled)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn cloud_training_steps_sum_phase_losses() {
    let set = gen_synthetic_clouds(&[Shape::Sphere, Shape::Plane], 3, 32, 0.01, 22).unwrap();
    let mut model = toy_cloud_model(23);
    let cfg = TrainConfig {
        batch_size: 2,
        ..TrainConfig::default()
    };
    let before = model.store.fingerprint();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let (metrics, steps) = train_cloud_epoch(&mut model, &set, &cfg, &mut rng).unwrap();
    assert_eq!(steps.len(), 6);
    for s in &steps {
        assert_eq!(s.phase_losses.len(), 2);
        assert_eq!(s.combined, s.phase_losses[0] + s.phase_losses[1]);
    }
    assert!(metrics.loss.is_finite());
    assert_ne!(model.store.fingerprint(), before);

    let mut tape = Tape::new();
    let fwd = model.forward(&mut tape, &set.clouds[0]).unwrap();
    assert_eq!(fwd.selected.len(), 1);
    assert_eq!(fwd.selected[0].len(), 16);
    assert!(model.predict(&set.clouds[0]).unwrap() < 2);
}

#[test]
fn graphsage_variant_runs_without_structural_weights() {
    let (g, _) = two_rings();
    let hops = exact_hop_sets(&g, 1).unwrap();
    let mut cfg = small_node_config(5, 2);
    cfg.variant = Variant::GraphSage;
    let model = NodeClassifier::new(cfg, 25).unwrap();
    assert_eq!(model.required_hops(), 1);
    assert!(model.layers().iter().all(|l| l.structural().is_none() && l.w_nw().is_none()));
    let logits = model.logits(&Tensor::glorot(20, 5, 26), &g, &hops).unwrap();
    assert!(logits.all_finite());
}
