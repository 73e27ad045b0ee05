//! Undirected graphs in compressed sparse row form, k-NN construction,
//! and exact multi-hop neighborhoods.

mod hops;
pub mod oracle;

use std::cmp::Ordering;
use std::sync::Arc;

pub use hops::{exact_hop_sets, HopSets};

use rand::Rng;

use crate::csr::Csr;
use crate::error::{Result, SamgcError};
use crate::tensor::Tensor;

/// Immutable undirected graph. Every node's neighbor list is sorted
/// ascending, free of duplicates and self-loops, and symmetric.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Arc<Csr>,
}

impl Graph {
    /// Symmetrises `edges`, drops self-loops and duplicates.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(SamgcError::Contract(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a != b {
                lists[a].push(b);
                lists[b].push(a);
            }
        }
        Ok(Self::from_unsorted_lists(lists))
    }

    fn from_unsorted_lists(mut lists: Vec<Vec<usize>>) -> Self {
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        Graph {
            adj: Arc::new(Csr::from_lists(&lists)),
        }
    }

    pub fn empty(n: usize) -> Self {
        Graph {
            adj: Arc::new(Csr::empty(n)),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.adj.segments()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.adj.nnz() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.adj.segment(v)
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.adj.segment(v).len()
    }

    /// Adjacency as index lists: segment `v` holds the neighbors of `v`.
    pub fn adjacency(&self) -> &Arc<Csr> {
        &self.adj
    }

    /// Edge list with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for v in 0..self.n() {
            for &u in self.neighbors(v) {
                if v < u {
                    out.push((v, u));
                }
            }
        }
        out
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n())?;
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .map(|(a, b)| (perm[a], perm[b]))
            .collect();
        Graph::from_edges(self.n(), &edges)
    }

    /// Verifies sortedness, symmetry and the absence of self-loops.
    pub fn check_invariants(&self) -> Result<()> {
        for v in 0..self.n() {
            let nb = self.neighbors(v);
            if nb.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SamgcError::Contract(format!(
                    "neighbors of {v} not strictly increasing"
                )));
            }
            for &u in nb {
                if u == v {
                    return Err(SamgcError::Contract(format!("self-loop at {v}")));
                }
                if self.neighbors(u).binary_search(&v).is_err() {
                    return Err(SamgcError::Contract(format!(
                        "edge {v}->{u} has no reverse"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(SamgcError::Contract(format!(
            "permutation of length {} for {n} nodes",
            perm.len()
        )));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(SamgcError::Contract("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest rows of every row by Euclidean distance, self excluded,
/// ties broken by the lower row index. Each list is ordered nearest first.
pub fn knn_lists(features: &Tensor, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = features.rows();
    if k == 0 || n <= k {
        return Err(SamgcError::Config(format!(
            "k-NN needs n > k >= 1, got n = {n}, k = {k}"
        )));
    }
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    };
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        let fi = features.row(i);
        cand.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(fi, features.row(j)), j)),
        );
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, by_distance);
            cand.truncate(k);
        }
        cand.sort_unstable_by(by_distance);
        out.push(cand.iter().map(|&(_, j)| j).collect());
    }
    Ok(out)
}

/// k-NN graph over the rows of `features`, symmetrised by union.
pub fn build_knn_graph(features: &Tensor, k: usize) -> Result<Graph> {
    let lists = knn_lists(features, k)?;
    let mut sym: Vec<Vec<usize>> = vec![Vec::new(); lists.len()];
    for (i, l) in lists.iter().enumerate() {
        for &j in l {
            sym[i].push(j);
            sym[j].push(i);
        }
    }
    Ok(Graph::from_unsorted_lists(sym))
}

/// Erdős–Rényi graph: every pair is joined independently with probability `p`.
pub fn gnp<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                edges.push((a, b));
            }
        }
    }
    Graph::from_edges(n, &edges).expect("pairs are in range")
}

/// Subgraph on `keep` (strictly increasing), renumbered `0..keep.len()` in order.
pub fn induced_subgraph(g: &Graph, keep: &[usize]) -> Result<Graph> {
    if keep.is_empty() {
        return Err(SamgcError::Contract("induced subgraph on no nodes".into()));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SamgcError::Contract(
            "kept nodes must be strictly increasing".into(),
        ));
    }
    if *keep.last().unwrap() >= g.n() {
        return Err(SamgcError::Contract(format!(
            "kept node {} outside 0..{}",
            keep.last().unwrap(),
            g.n()
        )));
    }
    let mut new_id = vec![usize::MAX; g.n()];
    for (i, &v) in keep.iter().enumerate() {
        new_id[v] = i;
    }
    let lists: Vec<Vec<usize>> = keep
        .iter()
        .map(|&v| {
            g.neighbors(v)
                .iter()
                .filter_map(|&u| (new_id[u] != usize::MAX).then_some(new_id[u]))
                .collect()
        })
        .collect();
    // Relabelling is monotone, so the filtered lists stay sorted.
    Ok(Graph {
        adj: Arc::new(Csr::from_lists(&lists)),
    })
}
