use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::CitationDataset;
use crate::error::{Result, SamgcError};
use crate::graph::Graph;
use crate::tensor::Tensor;

/// Planted-partition citation graph with sparse binary bag-of-words rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCitation {
    pub nodes: usize,
    pub features: usize,
    pub classes: usize,
    /// Active words per row.
    pub words_per_node: usize,
    /// Probability that a word comes from the node's class vocabulary.
    pub topic_rate: f64,
    pub edges: usize,
    /// Probability that an edge stays inside a class.
    pub homophily: f64,
    pub seed: u64,
}

impl SyntheticCitation {
    /// Same sizes as the Cora distribution.
    pub fn cora_shaped(seed: u64) -> Self {
        SyntheticCitation {
            nodes: 2708,
            features: 1433,
            classes: 7,
            words_per_node: 18,
            topic_rate: 0.3,
            edges: 5278,
            homophily: 0.8,
            seed,
        }
    }

    pub fn generate(&self) -> Result<CitationDataset> {
        let (n, c, k) = (self.nodes, self.features, self.classes);
        if n < 2 || k == 0 || k > n || c < k || self.words_per_node > c {
            return Err(SamgcError::Config(format!("invalid synthetic citation sizes {self:?}")));
        }
        if self.edges > n * (n - 1) / 2 {
            return Err(SamgcError::Config(format!("{} edges do not fit in {n} nodes", self.edges)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        labels.shuffle(&mut rng);
        let mut members = vec![Vec::new(); k];
        for (i, &y) in labels.iter().enumerate() {
            members[y].push(i);
        }

        let vocab = c / k;
        let mut features = Tensor::zeros(n, c);
        for (i, &y) in labels.iter().enumerate() {
            let mut placed = 0;
            while placed < self.words_per_node {
                let w = if rng.random::<f64>() < self.topic_rate {
                    y * vocab + rng.random_range(0..vocab)
                } else {
                    rng.random_range(0..c)
                };
                if features.get(i, w) == 0.0 {
                    features.set(i, w, 1.0);
                    placed += 1;
                }
            }
        }

        let mut edges = BTreeSet::new();
        while edges.len() < self.edges {
            let u = rng.random_range(0..n);
            let v = if rng.random::<f64>() < self.homophily {
                members[labels[u]][rng.random_range(0..members[labels[u]].len())]
            } else {
                rng.random_range(0..n)
            };
            if u != v {
                edges.insert((u.min(v), u.max(v)));
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let id_map: HashMap<String, usize> = ids.iter().cloned().zip(0..).collect();
        Ok(CitationDataset {
            features,
            labels,
            graph: Graph::from_edges(n, &edges)?,
            ids,
            id_map,
            class_names: (0..k).map(|i| format!("class{i}")).collect(),
        })
    }
}
