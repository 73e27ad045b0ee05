use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SamgcError};

/// Disjoint node-index sets, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(i) {
                return Err(SamgcError::Contract(format!("node {i} is in two split sets")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitMode {
    /// `per_class` training nodes of every class, then `val` and `test`
    /// nodes drawn from the rest.
    Standard {
        per_class: usize,
        val: usize,
        test: usize,
    },
    /// Per-class fractions; the remainder of each class goes to test.
    Random { train: f64, val: f64 },
}

impl SplitMode {
    pub const STANDARD: SplitMode = SplitMode::Standard {
        per_class: 20,
        val: 500,
        test: 1000,
    };
}

fn by_class(labels: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut classes = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        classes
            .get_mut(y)
            .ok_or_else(|| SamgcError::Data(format!("node {i} has label {y} of {num_classes} classes")))?
            .push(i);
    }
    Ok(classes)
}

/// Stratified split, deterministic for a given seed.
pub fn make_split(labels: &[usize], num_classes: usize, mode: SplitMode, seed: u64) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = by_class(labels, num_classes)?;
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    match mode {
        SplitMode::Standard { per_class, val, test } => {
            let mut rest = Vec::new();
            for (c, members) in classes.iter_mut().enumerate() {
                if members.len() < per_class {
                    return Err(SamgcError::Data(format!(
                        "class {c} has {} nodes, {per_class} requested for training",
                        members.len()
                    )));
                }
                members.shuffle(&mut rng);
                split.train.extend_from_slice(&members[..per_class]);
                rest.extend_from_slice(&members[per_class..]);
            }
            rest.sort_unstable();
            rest.shuffle(&mut rng);
            if rest.len() < val + test {
                return Err(SamgcError::Data(format!(
                    "{} nodes left after training, {val} + {test} requested",
                    rest.len()
                )));
            }
            split.val = rest[..val].to_vec();
            split.test = rest[val..val + test].to_vec();
        }
        SplitMode::Random { train, val } => {
            if !(train > 0.0 && val >= 0.0 && train + val < 1.0) {
                return Err(SamgcError::Config(format!(
                    "split fractions train={train} val={val} must be positive and sum below 1"
                )));
            }
            for (c, members) in classes.iter_mut().enumerate() {
                if members.is_empty() {
                    continue;
                }
                let n_train = ((train * members.len() as f64).round() as usize).max(1);
                let n_val = (val * members.len() as f64).round() as usize;
                if n_train + n_val > members.len() {
                    return Err(SamgcError::Data(format!(
                        "class {c} has {} nodes, too few for the requested fractions",
                        members.len()
                    )));
                }
                members.shuffle(&mut rng);
                split.train.extend_from_slice(&members[..n_train]);
                split.val.extend_from_slice(&members[n_train..n_train + n_val]);
                split.test.extend_from_slice(&members[n_train + n_val..]);
            }
        }
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}
