//! The node classifier, the grouped point-cloud classifier, metrics and the
//! training loops that drive them.

mod cloud;
mod node;
mod train;

use crate::autodiff::{softmax_in_place, Tape, Var};
use crate::error::{Result, SamgcError};
use crate::tensor::Tensor;

pub use cloud::{CloudConfig, CloudForward, GsamgcModule, Phase, PointCloudClassifier};
pub use node::{NodeClassifier, NodeConfig};
pub use train::{
    evaluate, metrics_rows, train_cloud_classifier, train_cloud_epoch, train_epoch,
    train_node_classifier, evaluate_clouds, CloudEpoch, CloudReport, CloudStep, EpochRecord,
    NodeTask, NodeTrainReport, TrainConfig,
};

/// Accuracy summary over one evaluation set.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Overall accuracy: correct / total.
    pub oa: f64,
    /// Mean recall over the classes present in the set.
    pub macc: f64,
    pub loss: f64,
    /// Recall per class, `None` for classes absent from the set.
    pub per_class_recall: Vec<Option<f64>>,
}

impl Metrics {
    pub fn from_predictions(
        predictions: &[usize],
        labels: &[usize],
        num_classes: usize,
        loss: f64,
    ) -> Result<Self> {
        if predictions.is_empty() {
            return Err(SamgcError::Contract("metrics over an empty set".into()));
        }
        if predictions.len() != labels.len() {
            return Err(SamgcError::Shape(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let mut total = vec![0usize; num_classes];
        let mut hit = vec![0usize; num_classes];
        let mut correct = 0;
        for (&p, &y) in predictions.iter().zip(labels) {
            if y >= num_classes {
                return Err(SamgcError::Data(format!("label {y} of {num_classes} classes")));
            }
            total[y] += 1;
            if p == y {
                hit[y] += 1;
                correct += 1;
            }
        }
        let per_class_recall: Vec<Option<f64>> = total
            .iter()
            .zip(&hit)
            .map(|(&t, &h)| (t > 0).then(|| h as f64 / t as f64))
            .collect();
        let present: Vec<f64> = per_class_recall.iter().flatten().copied().collect();
        Ok(Metrics {
            oa: correct as f64 / predictions.len() as f64,
            macc: present.iter().sum::<f64>() / present.len() as f64,
            loss,
            per_class_recall,
        })
    }
}

/// Row-wise argmax, ties to the lower class index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows()).map(|r| argmax(logits.row(r))).collect()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Class with the largest sum of per-phase softmax probabilities.
pub fn combine_predictions(phase_logits: &[&[f64]]) -> Result<usize> {
    let first = phase_logits
        .first()
        .ok_or_else(|| SamgcError::Contract("no phase predictions to combine".into()))?;
    let mut total = vec![0.0; first.len()];
    for logits in phase_logits {
        if logits.len() != total.len() {
            return Err(SamgcError::Shape("phases disagree on the class count".into()));
        }
        let mut p = logits.to_vec();
        softmax_in_place(&mut p);
        for (t, q) in total.iter_mut().zip(p) {
            *t += q;
        }
    }
    Ok(argmax(&total))
}

/// Sums per-phase losses on the tape and combines per-phase 1×K logits into
/// one prediction.
pub fn hierarchical_combine(tape: &mut Tape, logits: &[Var], losses: &[Var]) -> Result<(usize, Var)> {
    if logits.is_empty() || logits.len() != losses.len() {
        return Err(SamgcError::Contract(format!(
            "{} phase logits with {} phase losses",
            logits.len(),
            losses.len()
        )));
    }
    let rows: Vec<&[f64]> = logits.iter().map(|&l| tape.value(l).row(0)).collect();
    let prediction = combine_predictions(&rows)?;
    let mut total = losses[0];
    for &l in &losses[1..] {
        total = tape.add(total, l)?;
    }
    Ok((prediction, total))
}
