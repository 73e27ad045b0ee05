//! End-to-end runs driven by a [`RunConfig`]: dataset loading, node and
//! point-cloud training, the variant ablation and per-edge feature dumps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::autodiff::Tape;
use crate::config::{DatasetKind, RunConfig};
use crate::data::{
    gen_synthetic_clouds, load_cora, make_split, Checkpoint, CitationDataset, MetricsRow, Split,
    SyntheticCitation, SyntheticCloudSet,
};
use crate::error::{Result, SamgcError};
use crate::features::edge_features;
use crate::graph::{exact_hop_sets, HopSets};
use crate::layer::Variant;
use crate::models::{
    evaluate, evaluate_clouds, metrics_rows, train_cloud_classifier, train_node_classifier,
    CloudEpoch, CloudReport, Metrics, NodeClassifier, NodeTask, NodeTrainReport,
    PointCloudClassifier,
};

/// `cora.content` and `cora.cites` inside `dir`.
pub fn cora_files(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("cora.content"), dir.join("cora.cites"))
}

pub fn load_node_dataset(cfg: &RunConfig) -> Result<CitationDataset> {
    let data = match cfg.dataset {
        DatasetKind::Cora => {
            let (content, cites) = cora_files(Path::new(&cfg.data_dir));
            load_cora(&content, &cites)?.0
        }
        DatasetKind::Synthetic => SyntheticCitation {
            nodes: cfg.synth_nodes,
            features: cfg.synth_features,
            classes: 7,
            words_per_node: 18.min(cfg.synth_features),
            topic_rate: 0.3,
            edges: cfg.synth_edges,
            homophily: 0.8,
            seed: cfg.synth_seed,
        }
        .generate()?,
    };
    Ok(if cfg.normalize_features {
        data.row_normalized()
    } else {
        data
    })
}

/// Split and hop sets of a node run; both depend only on the config.
pub struct NodeSetup {
    pub split: Split,
    pub hops: HopSets,
}

impl NodeSetup {
    pub fn new(cfg: &RunConfig, data: &CitationDataset) -> Result<Self> {
        let split = make_split(&data.labels, data.num_classes(), cfg.split_mode(), cfg.split_seed)?;
        let depth = if cfg.variant.uses_multi_hop() { cfg.hops } else { 1 };
        let hops = exact_hop_sets(&data.graph, depth.max(1))?;
        Ok(NodeSetup { split, hops })
    }

    pub fn task<'a>(&'a self, data: &'a CitationDataset) -> NodeTask<'a> {
        NodeTask {
            features: &data.features,
            graph: &data.graph,
            hops: &self.hops,
            labels: &data.labels,
            num_classes: data.num_classes(),
            split: &self.split,
        }
    }
}

pub struct NodeRun {
    pub model: NodeClassifier,
    pub report: NodeTrainReport,
    pub rows: Vec<MetricsRow>,
}

pub fn new_node_model(cfg: &RunConfig, data: &CitationDataset) -> Result<NodeClassifier> {
    NodeClassifier::new(cfg.node_config(data.num_features(), data.num_classes()), cfg.seed)
}

pub fn run_node(cfg: &RunConfig, data: &CitationDataset) -> Result<NodeRun> {
    let setup = NodeSetup::new(cfg, data)?;
    let mut model = new_node_model(cfg, data)?;
    let report = train_node_classifier(&mut model, &setup.task(data), &cfg.node_train_config())?;
    let rows = metrics_rows(&report.history);
    Ok(NodeRun { model, report, rows })
}

/// Validation and test metrics of `model` under the split of `cfg`.
pub fn evaluate_node(model: &NodeClassifier, cfg: &RunConfig, data: &CitationDataset) -> Result<(Metrics, Metrics)> {
    let setup = NodeSetup::new(cfg, data)?;
    let task = setup.task(data);
    Ok((evaluate(model, &task, &setup.split.val)?, evaluate(model, &task, &setup.split.test)?))
}

pub fn save_checkpoint(store: &crate::autodiff::ParamStore, cfg: &RunConfig, path: &Path) -> Result<()> {
    Checkpoint::from_store(store, cfg.to_text()).save(path)
}

/// Rebuilds the node model recorded in a checkpoint, with the config echo
/// it was saved with.
pub fn load_node_model(path: &Path, data: &CitationDataset) -> Result<(NodeClassifier, RunConfig)> {
    let ckpt = Checkpoint::load(path)?;
    let cfg = RunConfig::from_text(&ckpt.config)?;
    let mut model = new_node_model(&cfg, data)?;
    ckpt.apply_to(&mut model.store)?;
    Ok((model, cfg))
}

pub fn load_cloud_model(path: &Path) -> Result<(PointCloudClassifier, RunConfig)> {
    let ckpt = Checkpoint::load(path)?;
    let cfg = RunConfig::from_text(&ckpt.config)?;
    let mut model = PointCloudClassifier::new(cfg.cloud_config(), cfg.seed)?;
    ckpt.apply_to(&mut model.store)?;
    Ok((model, cfg))
}

/// Training and test clouds. Their generator seeds derive from `split_seed`.
pub fn cloud_sets(cfg: &RunConfig) -> Result<(SyntheticCloudSet, SyntheticCloudSet)> {
    let gen = |per_class, seed| gen_synthetic_clouds(&cfg.pc_shapes, per_class, cfg.pc_points, cfg.pc_noise, seed);
    Ok((
        gen(cfg.pc_train_per_class, 2 * cfg.split_seed + 1)?,
        gen(cfg.pc_test_per_class, 2 * cfg.split_seed + 2)?,
    ))
}

pub struct CloudRun {
    pub model: PointCloudClassifier,
    pub report: CloudReport,
    pub rows: Vec<MetricsRow>,
}

/// Trains the point-cloud classifier, evaluating the test set every epoch.
pub fn run_cloud(cfg: &RunConfig, on_epoch: impl FnMut(&CloudEpoch)) -> Result<CloudRun> {
    let (train, test) = cloud_sets(cfg)?;
    let mut model = PointCloudClassifier::new(cfg.cloud_config(), cfg.seed)?;
    let report = train_cloud_classifier(&mut model, &train, &test, &cfg.cloud_train_config(), true, on_epoch)?;
    let rows = cloud_rows(&report);
    Ok(CloudRun { model, report, rows })
}

pub fn evaluate_cloud_model(model: &PointCloudClassifier, cfg: &RunConfig) -> Result<Metrics> {
    let (_, test) = cloud_sets(cfg)?;
    evaluate_clouds(model, &test)
}

fn cloud_rows(report: &CloudReport) -> Vec<MetricsRow> {
    let row = |epoch, split: &str, m: &Metrics| MetricsRow {
        epoch,
        split: split.to_string(),
        loss: m.loss,
        oa: m.oa,
        macc: m.macc,
    };
    report
        .epochs
        .iter()
        .flat_map(|e| {
            let mut v = vec![row(e.epoch, "train", &e.train)];
            if let Some(t) = &e.test {
                v.push(row(e.epoch, "test", t));
            }
            v
        })
        .collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    /// Test accuracy of the restored best model, one per seed.
    pub test_oa: Vec<f64>,
}

impl AblationRow {
    pub fn mean_std(&self) -> (f64, f64) {
        mean_std(&self.test_oa)
    }
}

/// Every variant on the same data and split, model seeds `cfg.seed ..
/// cfg.seed + seeds`. `on_run` sees each finished run.
pub fn run_ablation(
    cfg: &RunConfig,
    data: &CitationDataset,
    seeds: usize,
    mut on_run: impl FnMut(Variant, u64, &NodeTrainReport),
) -> Result<Vec<AblationRow>> {
    if seeds == 0 {
        return Err(SamgcError::Config("ablation needs at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(Variant::ALL.len());
    for variant in Variant::ALL {
        let mut vcfg = cfg.clone();
        vcfg.variant = variant;
        let setup = NodeSetup::new(&vcfg, data)?;
        let mut test_oa = Vec::with_capacity(seeds);
        for s in 0..seeds as u64 {
            vcfg.seed = cfg.seed + s;
            let mut model = new_node_model(&vcfg, data)?;
            let report = train_node_classifier(&mut model, &setup.task(data), &vcfg.node_train_config())?;
            on_run(variant, vcfg.seed, &report);
            test_oa.push(report.test.oa);
        }
        rows.push(AblationRow { variant, test_oa });
    }
    Ok(rows)
}

pub fn format_ablation(rows: &[AblationRow], precision: usize) -> String {
    let mut out = String::from("variant    test_oa (mean ± std)  runs\n");
    for r in rows {
        let (m, s) = r.mean_std();
        let acc = format!("{m:.p$} ± {s:.p$}", p = precision);
        let _ = writeln!(out, "{:<10} {acc:<21} {}", r.variant.name(), r.test_oa.len());
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeFeatureRow {
    pub target: usize,
    pub neighbor: usize,
    pub fa: f64,
    /// `‖h_u - h_v‖₁`.
    pub fd_l1: f64,
    pub re: Vec<f64>,
}

/// Structural features of the first layer of `model` on every directed edge.
pub fn dump_edge_features(model: &NodeClassifier, data: &CitationDataset) -> Result<Vec<EdgeFeatureRow>> {
    let layer = &model.layers()[0];
    let sp = layer.structural().ok_or_else(|| {
        SamgcError::Config(format!("variant {} computes no structural features", layer.spec().variant))
    })?;
    let mut tape = Tape::new();
    let h = tape.constant(data.features.clone());
    let adj = data.graph.adjacency();
    let ef = edge_features(&mut tape, &model.store, h, adj, sp, layer.spec().feature_act)?;
    let (fa, re) = (tape.value(ef.fa), tape.value(ef.re));
    let mut rows = Vec::with_capacity(adj.nnz());
    for v in 0..data.n() {
        for e in adj.range(v) {
            let u = adj.indices()[e];
            let fd_l1 = data
                .features
                .row(u)
                .iter()
                .zip(data.features.row(v))
                .map(|(a, b)| (a - b).abs())
                .sum();
            rows.push(EdgeFeatureRow {
                target: v,
                neighbor: u,
                fa: fa.data()[e],
                fd_l1,
                re: re.row(e).to_vec(),
            });
        }
    }
    Ok(rows)
}

pub fn format_edge_features(rows: &[EdgeFeatureRow], precision: usize) -> String {
    let width = rows.first().map_or(0, |r| r.re.len());
    let mut out = String::from("target,neighbor,fa,fd_l1");
    for j in 0..width {
        let _ = write!(out, ",re{j}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{:.p$},{:.p$}", r.target, r.neighbor, r.fa, r.fd_l1, p = precision);
        for x in &r.re {
            let _ = write!(out, ",{x:.p$}", p = precision);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::from_text(
            "dataset = synthetic\nsynth_nodes = 120\nsynth_features = 40\nsynth_edges = 260\n\
             split = random\nhidden_dim = 8\nre_dim = 4\nnw_dim = 4\nepochs = 4\n",
        )
        .unwrap();
        cfg.patience = 0;
        cfg
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean_std(&[]).0.is_nan());
    }

    #[test]
    fn node_run_writes_three_rows_per_epoch_and_repeats() {
        let cfg = small_cfg();
        let data = load_node_dataset(&cfg).unwrap();
        assert_eq!(data.n(), 120);
        let a = run_node(&cfg, &data).unwrap();
        let b = run_node(&cfg, &data).unwrap();
        assert_eq!(a.rows.len(), 12);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.model.store.fingerprint(), b.model.store.fingerprint());
        let (val, test) = evaluate_node(&a.model, &cfg, &data).unwrap();
        assert_eq!((val, test), (a.report.val.clone(), a.report.test.clone()));
    }

    #[test]
    fn checkpoint_rebuilds_the_same_model() {
        let cfg = small_cfg();
        let data = load_node_dataset(&cfg).unwrap();
        let run = run_node(&cfg, &data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&run.model.store, &cfg, &path).unwrap();
        let (model, echoed) = load_node_model(&path, &data).unwrap();
        assert_eq!(echoed, cfg);
        assert_eq!(model.store.fingerprint(), run.model.store.fingerprint());
        assert_eq!(evaluate_node(&model, &cfg, &data).unwrap().1, run.report.test);
    }

    #[test]
    fn missing_cora_is_an_io_error() {
        let mut cfg = RunConfig::default();
        cfg.data_dir = "/nonexistent/cora".into();
        assert_eq!(load_node_dataset(&cfg).unwrap_err().kind(), "io");
    }

    #[test]
    fn ablation_covers_every_variant() {
        let mut cfg = small_cfg();
        cfg.epochs = 2;
        let data = load_node_dataset(&cfg).unwrap();
        let mut runs = 0;
        let rows = run_ablation(&cfg, &data, 2, |_, _, _| runs += 1).unwrap();
        assert_eq!(runs, 8);
        assert_eq!(rows.iter().map(|r| r.variant).collect::<Vec<_>>(), Variant::ALL.to_vec());
        let table = format_ablation(&rows, 3);
        assert_eq!(table.lines().count(), 5);
        assert!(table.contains("nwa_sagc"));
    }

    #[test]
    fn feature_dump_has_one_row_per_directed_edge() {
        let cfg = small_cfg();
        let data = load_node_dataset(&cfg).unwrap();
        let model = new_node_model(&cfg, &data).unwrap();
        let rows = dump_edge_features(&model, &data).unwrap();
        assert_eq!(rows.len(), 2 * data.graph.num_edges());
        for r in &rows {
            assert!((-1.0..=1.0).contains(&r.fa));
            assert_eq!(r.re.len(), 4);
            assert!(data.graph.neighbors(r.target).contains(&r.neighbor));
        }
        let text = format_edge_features(&rows, 4);
        assert!(text.starts_with("target,neighbor,fa,fd_l1,re0,re1,re2,re3\n"));

        let mut sage = cfg.clone();
        sage.variant = Variant::GraphSage;
        let model = new_node_model(&sage, &data).unwrap();
        assert_eq!(dump_edge_features(&model, &data).unwrap_err().kind(), "config");
    }
}
