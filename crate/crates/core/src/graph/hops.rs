use std::sync::Arc;

use super::Graph;
use crate::csr::Csr;
use crate::error::{Result, SamgcError};

/// Exact-distance neighborhoods: for hop `i` in `1..=t`, node `v` owns the
/// sorted nodes at shortest-path distance exactly `i` from `v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HopSets {
    hops: Vec<Arc<Csr>>,
}

impl HopSets {
    /// Deepest hop stored.
    pub fn t(&self) -> usize {
        self.hops.len()
    }

    pub fn n(&self) -> usize {
        self.hops[0].segments()
    }

    /// Index lists of hop `i` (1-based).
    pub fn hop(&self, i: usize) -> &Arc<Csr> {
        assert!(i >= 1 && i <= self.t(), "hop {i} outside 1..={}", self.t());
        &self.hops[i - 1]
    }

    pub fn members(&self, v: usize, i: usize) -> &[usize] {
        self.hop(i).segment(v)
    }
}

/// Frontier expansion from every node, up to `t` hops.
pub fn exact_hop_sets(g: &Graph, t: usize) -> Result<HopSets> {
    if t == 0 {
        return Err(SamgcError::Config("hop count t must be at least 1".into()));
    }
    let n = g.n();
    let mut lists: Vec<Vec<Vec<usize>>> = vec![Vec::with_capacity(n); t];
    // stamp[u] == v + 1 marks u as reached from source v
    let mut stamp = vec![0usize; n];
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    for v in 0..n {
        stamp[v] = v + 1;
        frontier.clear();
        frontier.push(v);
        for hop in lists.iter_mut() {
            next.clear();
            for &f in &frontier {
                for &u in g.neighbors(f) {
                    if stamp[u] != v + 1 {
                        stamp[u] = v + 1;
                        next.push(u);
                    }
                }
            }
            next.sort_unstable();
            hop.push(next.clone());
            std::mem::swap(&mut frontier, &mut next);
        }
    }
    Ok(HopSets {
        hops: lists
            .iter()
            .map(|per_node| Arc::new(Csr::from_lists(per_node)))
            .collect(),
    })
}
