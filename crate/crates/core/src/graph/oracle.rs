//! Textbook breadth-first search, kept separate from the frontier expansion
//! in [`exact_hop_sets`](super::exact_hop_sets) so each can check the other.

use std::collections::VecDeque;

use super::Graph;
use crate::error::{Result, SamgcError};

/// Hop sets `1..=t` of `v` from BFS distance labels, each sorted ascending.
pub fn bfs_oracle(g: &Graph, v: usize, t: usize) -> Result<Vec<Vec<usize>>> {
    if v >= g.n() {
        return Err(SamgcError::Contract(format!(
            "node {v} outside 0..{}",
            g.n()
        )));
    }
    let mut dist: Vec<Option<usize>> = vec![None; g.n()];
    dist[v] = Some(0);
    let mut queue = VecDeque::from([v]);
    while let Some(x) = queue.pop_front() {
        let dx = dist[x].unwrap();
        if dx == t {
            continue;
        }
        for &y in g.neighbors(x) {
            if dist[y].is_none() {
                dist[y] = Some(dx + 1);
                queue.push_back(y);
            }
        }
    }
    Ok((1..=t)
        .map(|i| (0..g.n()).filter(|&u| dist[u] == Some(i)).collect())
        .collect())
}
