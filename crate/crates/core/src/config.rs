//! Flat `key = value` run configuration.
//!
//! Every key has a default listed in [`KEYS`]; [`RunConfig::default`] is
//! built by parsing that table, so the documentation cannot drift from the
//! values. Lines starting with `#` and blank lines are ignored.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::autodiff::AdamConfig;
use crate::data::{Shape, SplitMode};
use crate::error::{Result, SamgcError};
use crate::layer::Variant;
use crate::models::{CloudConfig, NodeConfig, TrainConfig};

/// `(key, default, description)` for every accepted key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("dataset", "cora", "node dataset: cora (raw files under data_dir) or synthetic"),
    ("synth_nodes", "2708", "nodes of the synthetic citation graph"),
    ("synth_features", "1433", "bag-of-words width of the synthetic graph"),
    ("synth_edges", "5278", "undirected edges of the synthetic graph"),
    ("synth_seed", "1", "generator seed of the synthetic graph"),
    ("data_dir", "data/cora", "directory holding cora.content and cora.cites"),
    ("out", "out", "output directory for metrics and checkpoints"),
    ("variant", "samgc", "graphsage | sagc | nwa_sagc | samgc"),
    ("hops", "2", "multi-hop depth t"),
    ("hidden_dim", "64", "node classifier layer width"),
    ("layers", "3", "node classifier depth"),
    ("re_dim", "16", "relational embedding width R"),
    ("nw_dim", "16", "neighbor-wise embedding width"),
    ("lr", "0.01", "Adam learning rate"),
    ("beta1", "0.9", "Adam first-moment decay"),
    ("beta2", "0.999", "Adam second-moment decay"),
    ("eps", "1e-8", "Adam denominator offset"),
    ("weight_decay", "5e-4", "decoupled weight decay"),
    ("dropout", "0.5", "dropout on hidden inputs during training"),
    ("epochs", "300", "maximum node-classification epochs"),
    ("patience", "30", "early-stopping patience in epochs, 0 disables"),
    ("seed", "0", "seed for initialisation, dropout and shuffling"),
    ("split", "standard", "standard (20 per class / 500 / 1000) or random"),
    ("split_seed", "0", "seed of the train/val/test split"),
    ("split_train", "0.6", "per-class train fraction of a random split"),
    ("split_val", "0.2", "per-class validation fraction of a random split"),
    ("normalize_features", "false", "row-normalise node features"),
    ("precision", "6", "decimals in CSV outputs"),
    ("k_list", "8,16", "k of each k-NN graph in a grouped module"),
    ("pool_ratio", "0.5", "fraction of nodes kept by each pooling stage"),
    ("phases", "2", "point-cloud phases"),
    ("modules_per_phase", "2", "grouped modules per phase"),
    ("pc_width", "16", "output width of one group"),
    ("pc_re_dim", "8", "relational embedding width in the point-cloud model"),
    ("pc_nw_dim", "8", "neighbor-wise width in the point-cloud model"),
    ("pc_shapes", "sphere,cube,plane,torus", "synthetic shape classes"),
    ("pc_points", "128", "points per cloud"),
    ("pc_noise", "0.02", "Gaussian jitter sigma"),
    ("pc_train_per_class", "200", "training clouds per class"),
    ("pc_test_per_class", "50", "test clouds per class"),
    ("pc_epochs", "5", "point-cloud training epochs"),
    ("pc_lr", "0.01", "point-cloud learning rate"),
    ("pc_weight_decay", "0", "point-cloud decoupled weight decay"),
    ("pc_batch", "16", "clouds per optimizer step"),
    ("pc_augment", "false", "random rotation of training clouds every epoch"),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Cora,
    /// Generated citation graph sized by the `synth_*` keys.
    Synthetic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub synth_nodes: usize,
    pub synth_features: usize,
    pub synth_edges: usize,
    pub synth_seed: u64,
    pub data_dir: String,
    pub out: String,
    pub variant: Variant,
    pub hops: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub re_dim: usize,
    pub nw_dim: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub split_random: bool,
    pub split_seed: u64,
    pub split_train: f64,
    pub split_val: f64,
    pub normalize_features: bool,
    pub precision: usize,
    pub k_list: Vec<usize>,
    pub pool_ratio: f64,
    pub phases: usize,
    pub modules_per_phase: usize,
    pub pc_width: usize,
    pub pc_re_dim: usize,
    pub pc_nw_dim: usize,
    pub pc_shapes: Vec<Shape>,
    pub pc_points: usize,
    pub pc_noise: f64,
    pub pc_train_per_class: usize,
    pub pc_test_per_class: usize,
    pub pc_epochs: usize,
    pub pc_lr: f64,
    pub pc_weight_decay: f64,
    pub pc_batch: usize,
    pub pc_augment: bool,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| SamgcError::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(SamgcError::Config(format!("bad value {value:?} for {key}, expected true or false"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items = value
        .split(',')
        .map(|s| parse(key, s.trim()))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(SamgcError::Config(format!("{key} is empty")));
    }
    Ok(items)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            dataset: DatasetKind::Cora,
            synth_nodes: 0,
            synth_features: 0,
            synth_edges: 0,
            synth_seed: 0,
            data_dir: String::new(),
            out: String::new(),
            variant: Variant::Samgc,
            hops: 0,
            hidden_dim: 0,
            layers: 0,
            re_dim: 0,
            nw_dim: 0,
            lr: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            weight_decay: 0.0,
            dropout: 0.0,
            epochs: 0,
            patience: 0,
            seed: 0,
            split_random: false,
            split_seed: 0,
            split_train: 0.0,
            split_val: 0.0,
            normalize_features: false,
            precision: 0,
            k_list: Vec::new(),
            pool_ratio: 0.0,
            phases: 0,
            modules_per_phase: 0,
            pc_width: 0,
            pc_re_dim: 0,
            pc_nw_dim: 0,
            pc_shapes: Vec::new(),
            pc_points: 0,
            pc_noise: 0.0,
            pc_train_per_class: 0,
            pc_test_per_class: 0,
            pc_epochs: 0,
            pc_lr: 0.0,
            pc_weight_decay: 0.0,
            pc_batch: 0,
            pc_augment: false,
        };
        for (key, value, _) in KEYS {
            cfg.set(key, value).expect("documented defaults parse");
        }
        cfg
    }
}

impl RunConfig {
    /// Defaults overridden by the lines of `text`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SamgcError::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| SamgcError::Config(format!("line {}: {}", i + 1, strip(&e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SamgcError::io(path, e))?;
        Self::from_text(&text)
    }

    /// Sets one key from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => {
                self.dataset = match value {
                    "cora" => DatasetKind::Cora,
                    "synthetic" => DatasetKind::Synthetic,
                    _ => return Err(SamgcError::Config(format!("unknown dataset {value:?}"))),
                }
            }
            "synth_nodes" => self.synth_nodes = parse(key, value)?,
            "synth_features" => self.synth_features = parse(key, value)?,
            "synth_edges" => self.synth_edges = parse(key, value)?,
            "synth_seed" => self.synth_seed = parse(key, value)?,
            "data_dir" => self.data_dir = value.to_string(),
            "out" => self.out = value.to_string(),
            "variant" => self.variant = value.parse()?,
            "hops" => self.hops = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "re_dim" => self.re_dim = parse(key, value)?,
            "nw_dim" => self.nw_dim = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "split" => {
                self.split_random = match value {
                    "standard" => false,
                    "random" => true,
                    _ => return Err(SamgcError::Config(format!("unknown split mode {value:?}"))),
                }
            }
            "split_seed" => self.split_seed = parse(key, value)?,
            "split_train" => self.split_train = parse(key, value)?,
            "split_val" => self.split_val = parse(key, value)?,
            "normalize_features" => self.normalize_features = parse_bool(key, value)?,
            "precision" => self.precision = parse(key, value)?,
            "k_list" => self.k_list = parse_list(key, value)?,
            "pool_ratio" => self.pool_ratio = parse(key, value)?,
            "phases" => self.phases = parse(key, value)?,
            "modules_per_phase" => self.modules_per_phase = parse(key, value)?,
            "pc_width" => self.pc_width = parse(key, value)?,
            "pc_re_dim" => self.pc_re_dim = parse(key, value)?,
            "pc_nw_dim" => self.pc_nw_dim = parse(key, value)?,
            "pc_shapes" => self.pc_shapes = parse_list(key, value)?,
            "pc_points" => self.pc_points = parse(key, value)?,
            "pc_noise" => self.pc_noise = parse(key, value)?,
            "pc_train_per_class" => self.pc_train_per_class = parse(key, value)?,
            "pc_test_per_class" => self.pc_test_per_class = parse(key, value)?,
            "pc_epochs" => self.pc_epochs = parse(key, value)?,
            "pc_lr" => self.pc_lr = parse(key, value)?,
            "pc_weight_decay" => self.pc_weight_decay = parse(key, value)?,
            "pc_batch" => self.pc_batch = parse(key, value)?,
            "pc_augment" => self.pc_augment = parse_bool(key, value)?,
            _ => return Err(SamgcError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Textual value of `key`, the inverse of [`RunConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "dataset" => match self.dataset {
                DatasetKind::Cora => "cora".into(),
                DatasetKind::Synthetic => "synthetic".into(),
            },
            "synth_nodes" => self.synth_nodes.to_string(),
            "synth_features" => self.synth_features.to_string(),
            "synth_edges" => self.synth_edges.to_string(),
            "synth_seed" => self.synth_seed.to_string(),
            "data_dir" => self.data_dir.clone(),
            "out" => self.out.clone(),
            "variant" => self.variant.to_string(),
            "hops" => self.hops.to_string(),
            "hidden_dim" => self.hidden_dim.to_string(),
            "layers" => self.layers.to_string(),
            "re_dim" => self.re_dim.to_string(),
            "nw_dim" => self.nw_dim.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "eps" => self.eps.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "dropout" => self.dropout.to_string(),
            "epochs" => self.epochs.to_string(),
            "patience" => self.patience.to_string(),
            "seed" => self.seed.to_string(),
            "split" => if self.split_random { "random" } else { "standard" }.into(),
            "split_seed" => self.split_seed.to_string(),
            "split_train" => self.split_train.to_string(),
            "split_val" => self.split_val.to_string(),
            "normalize_features" => self.normalize_features.to_string(),
            "precision" => self.precision.to_string(),
            "k_list" => join(&self.k_list),
            "pool_ratio" => self.pool_ratio.to_string(),
            "phases" => self.phases.to_string(),
            "modules_per_phase" => self.modules_per_phase.to_string(),
            "pc_width" => self.pc_width.to_string(),
            "pc_re_dim" => self.pc_re_dim.to_string(),
            "pc_nw_dim" => self.pc_nw_dim.to_string(),
            "pc_shapes" => self.pc_shapes.iter().map(|s| s.name()).collect::<Vec<_>>().join(","),
            "pc_points" => self.pc_points.to_string(),
            "pc_noise" => self.pc_noise.to_string(),
            "pc_train_per_class" => self.pc_train_per_class.to_string(),
            "pc_test_per_class" => self.pc_test_per_class.to_string(),
            "pc_epochs" => self.pc_epochs.to_string(),
            "pc_lr" => self.pc_lr.to_string(),
            "pc_weight_decay" => self.pc_weight_decay.to_string(),
            "pc_batch" => self.pc_batch.to_string(),
            "pc_augment" => self.pc_augment.to_string(),
            _ => return None,
        })
    }

    /// Every key in table order; `from_text(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (key, _, _) in KEYS {
            let value = self.get(key).expect("every listed key has a value");
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }

    pub fn node_config(&self, in_dim: usize, num_classes: usize) -> NodeConfig {
        NodeConfig {
            in_dim,
            num_classes,
            hidden_dim: self.hidden_dim,
            num_layers: self.layers,
            re_dim: self.re_dim,
            nw_dim: self.nw_dim,
            hops: self.hops,
            variant: self.variant,
            dropout: self.dropout,
        }
    }

    pub fn node_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: (self.patience > 0).then_some(self.patience),
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                weight_decay: self.weight_decay,
            },
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn split_mode(&self) -> SplitMode {
        if self.split_random {
            SplitMode::Random {
                train: self.split_train,
                val: self.split_val,
            }
        } else {
            SplitMode::STANDARD
        }
    }

    pub fn cloud_config(&self) -> CloudConfig {
        CloudConfig {
            num_classes: self.pc_shapes.len(),
            in_dim: 3,
            k_list: self.k_list.clone(),
            group_width: self.pc_width,
            phases: self.phases,
            modules_per_phase: self.modules_per_phase,
            pool_ratio: self.pool_ratio,
            hops: self.hops,
            re_dim: self.pc_re_dim,
            nw_dim: self.pc_nw_dim,
            variant: self.variant,
        }
    }

    pub fn cloud_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.pc_epochs,
            patience: None,
            adam: AdamConfig {
                lr: self.pc_lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                weight_decay: self.pc_weight_decay,
            },
            seed: self.seed,
            batch_size: self.pc_batch,
            augment_rotation: self.pc_augment,
        }
    }
}

/// Message of a configuration error without its category prefix.
fn strip(e: &SamgcError) -> String {
    match e {
        SamgcError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
