use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdamConfig, Tape};
use crate::data::{random_rotation, rotate, MetricsRow, Split, SyntheticCloudSet};
use crate::error::{Result, SamgcError};
use crate::graph::{Graph, HopSets};
use crate::models::{argmax_rows, Metrics, NodeClassifier, PointCloudClassifier};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many epochs without a better validation score.
    pub patience: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Clouds per optimizer step.
    pub batch_size: usize,
    /// Rotate every training cloud by a fresh random rotation each epoch.
    pub augment_rotation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            patience: Some(30),
            adam: AdamConfig::default(),
            seed: 0,
            batch_size: 16,
            augment_rotation: false,
        }
    }
}

/// Everything a node-classification run reads; shared read-only.
#[derive(Clone, Copy, Debug)]
pub struct NodeTask<'a> {
    pub features: &'a Tensor,
    pub graph: &'a Graph,
    pub hops: &'a HopSets,
    pub labels: &'a [usize],
    pub num_classes: usize,
    pub split: &'a Split,
}

fn masked_metrics(logits: &Tensor, task: &NodeTask<'_>, mask: &[usize], loss: f64) -> Result<Metrics> {
    let preds = argmax_rows(logits);
    let p: Vec<usize> = mask.iter().map(|&i| preds[i]).collect();
    let y: Vec<usize> = mask.iter().map(|&i| task.labels[i]).collect();
    Metrics::from_predictions(&p, &y, task.num_classes, loss)
}

/// Loss and accuracy over `mask` in evaluation mode; parameters untouched.
pub fn evaluate(model: &NodeClassifier, task: &NodeTask<'_>, mask: &[usize]) -> Result<Metrics> {
    Ok(evaluate_masks(model, task, &[mask])?.remove(0))
}

fn evaluate_masks(model: &NodeClassifier, task: &NodeTask<'_>, masks: &[&[usize]]) -> Result<Vec<Metrics>> {
    if masks.iter().any(|m| m.is_empty()) {
        return Err(SamgcError::Contract("evaluation mask is empty".into()));
    }
    let mut tape = Tape::new();
    let x = tape.constant(task.features.clone());
    let logits = model.node_forward(&mut tape, x, task.graph, task.hops, None)?;
    let mut out = Vec::with_capacity(masks.len());
    for mask in masks {
        let loss = tape.cross_entropy_mean(logits, task.labels, Some(mask))?;
        let loss = tape.value(loss).item();
        out.push(masked_metrics(tape.value(logits), task, mask, loss)?);
    }
    Ok(out)
}

/// One forward/backward/update over the training mask. Returns metrics of
/// the training-mode forward pass, taken before the update.
pub fn train_epoch(
    model: &mut NodeClassifier,
    task: &NodeTask<'_>,
    adam: &AdamConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Metrics> {
    let mut tape = Tape::new();
    let x = tape.constant(task.features.clone());
    let logits = model.node_forward(&mut tape, x, task.graph, task.hops, Some(rng))?;
    let loss = tape.cross_entropy_mean(logits, task.labels, Some(&task.split.train))?;
    let loss_value = tape.value(loss).item();
    let metrics = masked_metrics(tape.value(logits), task, &task.split.train, loss_value)?;
    tape.backward(loss)?;
    model.store.accumulate_grads(&tape);
    model.store.adam_step(adam);
    Ok(metrics)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: Metrics,
    pub val: Metrics,
    pub test: Metrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeTrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Metrics of the restored best parameters.
    pub val: Metrics,
    pub test: Metrics,
}

/// Trains with early stopping on validation accuracy (validation loss breaks
/// ties) and leaves the best parameters in `model`.
pub fn train_node_classifier(
    model: &mut NodeClassifier,
    task: &NodeTask<'_>,
    cfg: &TrainConfig,
) -> Result<NodeTrainReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, usize, Vec<Tensor>)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let train = train_epoch(model, task, &cfg.adam, &mut rng)?;
        let mut m = evaluate_masks(model, task, &[&task.split.val, &task.split.test])?;
        let test = m.pop().expect("two masks");
        let val = m.pop().expect("two masks");
        let improved = match &best {
            None => true,
            Some((oa, loss, _, _)) => val.oa > *oa || (val.oa == *oa && val.loss < *loss),
        };
        if improved {
            best = Some((val.oa, val.loss, epoch, model.store.snapshot()));
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(EpochRecord {
            epoch,
            train,
            val,
            test,
        });
        if cfg.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }
    let best_epoch = match best {
        Some((_, _, epoch, snapshot)) => {
            model.store.restore(&snapshot);
            epoch
        }
        None => 0,
    };
    let mut m = evaluate_masks(model, task, &[&task.split.val, &task.split.test])?;
    let test = m.pop().expect("two masks");
    let val = m.pop().expect("two masks");
    Ok(NodeTrainReport {
        history,
        best_epoch,
        val,
        test,
    })
}

/// Rows for the metrics CSV, train/val/test per epoch.
pub fn metrics_rows(history: &[EpochRecord]) -> Vec<MetricsRow> {
    history
        .iter()
        .flat_map(|r| {
            [("train", &r.train), ("val", &r.val), ("test", &r.test)].map(|(s, m)| MetricsRow {
                epoch: r.epoch,
                split: s.to_string(),
                loss: m.loss,
                oa: m.oa,
                macc: m.macc,
            })
        })
        .collect()
}

/// Losses seen on one training cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudStep {
    pub phase_losses: Vec<f64>,
    pub combined: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CloudEpoch {
    pub epoch: usize,
    pub train: Metrics,
    pub test: Option<Metrics>,
    pub steps: Vec<CloudStep>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CloudReport {
    pub epochs: Vec<CloudEpoch>,
    pub test: Metrics,
}

/// One shuffled pass over `set` in mini-batches. Gradients of a batch are
/// averaged before each Adam step.
pub fn train_cloud_epoch(
    model: &mut PointCloudClassifier,
    set: &SyntheticCloudSet,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Metrics, Vec<CloudStep>)> {
    if set.is_empty() {
        return Err(SamgcError::Contract("training set is empty".into()));
    }
    let batch = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(rng);
    let mut steps = Vec::with_capacity(set.len());
    let mut preds = Vec::with_capacity(set.len());
    let mut labels = Vec::with_capacity(set.len());
    let mut loss_sum = 0.0;
    for chunk in order.chunks(batch) {
        for &i in chunk {
            let mut cloud = set.clouds[i].clone();
            if cfg.augment_rotation {
                rotate(&mut cloud, &random_rotation(rng));
            }
            let mut tape = Tape::new();
            let fwd = model.forward(&mut tape, &cloud)?;
            let (losses, total, pred) = model.loss(&mut tape, &fwd, set.labels[i])?;
            steps.push(CloudStep {
                phase_losses: losses.iter().map(|&l| tape.value(l).item()).collect(),
                combined: tape.value(total).item(),
            });
            loss_sum += tape.value(total).item();
            preds.push(pred);
            labels.push(set.labels[i]);
            let scaled = tape.scale(total, 1.0 / chunk.len() as f64);
            tape.backward(scaled)?;
            model.store.accumulate_grads(&tape);
        }
        model.store.adam_step(&cfg.adam);
    }
    let metrics = Metrics::from_predictions(&preds, &labels, set.classes.len(), loss_sum / set.len() as f64)?;
    Ok((metrics, steps))
}

pub fn evaluate_clouds(model: &PointCloudClassifier, set: &SyntheticCloudSet) -> Result<Metrics> {
    if set.is_empty() {
        return Err(SamgcError::Contract("evaluation set is empty".into()));
    }
    let mut preds = Vec::with_capacity(set.len());
    let mut loss_sum = 0.0;
    for (cloud, &y) in set.clouds.iter().zip(&set.labels) {
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, cloud)?;
        let (_, total, pred) = model.loss(&mut tape, &fwd, y)?;
        loss_sum += tape.value(total).item();
        preds.push(pred);
    }
    Metrics::from_predictions(&preds, &set.labels, set.classes.len(), loss_sum / set.len() as f64)
}

/// Fixed-length training; `test` is evaluated after every epoch when given,
/// and once at the end regardless. `on_epoch` sees each finished epoch.
pub fn train_cloud_classifier(
    model: &mut PointCloudClassifier,
    train: &SyntheticCloudSet,
    test: &SyntheticCloudSet,
    cfg: &TrainConfig,
    eval_every_epoch: bool,
    mut on_epoch: impl FnMut(&CloudEpoch),
) -> Result<CloudReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (train_m, steps) = train_cloud_epoch(model, train, cfg, &mut rng)?;
        let test_m = if eval_every_epoch {
            Some(evaluate_clouds(model, test)?)
        } else {
            None
        };
        let record = CloudEpoch {
            epoch,
            train: train_m,
            test: test_m,
            steps,
        };
        on_epoch(&record);
        epochs.push(record);
    }
    let test = evaluate_clouds(model, test)?;
    Ok(CloudReport { epochs, test })
}
