//! Score-based graph pooling: embed, score with a softmax over all nodes,
//! rescale by score, refine with a one-hop SAMGC layer, keep the top-w nodes.
//!
//! The score multiplication sits on the path from the input to the kept
//! rows, so the score weights receive gradient even though the selection
//! itself is discrete.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Activation, ParamId, ParamStore, Tape, Var};
use crate::error::{Result, SamgcError};
use crate::graph::{build_knn_graph, exact_hop_sets, induced_subgraph, Graph};
use crate::layer::{LayerSpec, SamgcLayer};
use crate::tensor::Tensor;

/// How many nodes survive pooling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PoolSize {
    Count(usize),
    /// Fraction in (0, 1]; resolves to `max(1, ceil(ratio * n))`.
    Ratio(f64),
}

impl PoolSize {
    pub fn resolve(self, n: usize) -> Result<usize> {
        let w = match self {
            PoolSize::Count(w) => w,
            PoolSize::Ratio(r) => {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(SamgcError::Config(format!("pool ratio {r} outside (0, 1]")));
                }
                ((r * n as f64).ceil() as usize).max(1)
            }
        };
        if w == 0 || w > n {
            return Err(SamgcError::Config(format!(
                "cannot keep {w} of {n} nodes when pooling"
            )));
        }
        Ok(w)
    }
}

/// Graph handed to the next stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PooledGraph {
    /// Edges of the input graph among the kept nodes.
    Induced,
    /// k-NN graph rebuilt over the kept features.
    Knn(usize),
}

#[derive(Clone, Debug)]
pub struct PoolingParams {
    pub w_p: ParamId,
    pub w_1: ParamId,
    pub inner: SamgcLayer,
    pub size: PoolSize,
    pub act: Activation,
}

impl PoolingParams {
    /// `inner` maps `embed_dim` to `out_dim` with one hop.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        embed_dim: usize,
        inner: LayerSpec,
        size: PoolSize,
        rng: &mut R,
    ) -> Result<Self> {
        if inner.c_in != embed_dim {
            return Err(SamgcError::Config(format!(
                "pooling embeds to {embed_dim} but the inner layer reads {}",
                inner.c_in
            )));
        }
        let w_p = store.add(format!("{name}.w_p"), Tensor::glorot_with(c_in, embed_dim, rng));
        let w_1 = store.add(format!("{name}.w_1"), Tensor::glorot_with(embed_dim, 1, rng));
        let inner = SamgcLayer::new(store, &format!("{name}.inner"), inner.with_hops(1), rng)?;
        Ok(PoolingParams {
            w_p,
            w_1,
            inner,
            size,
            act: Activation::Relu,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.w_p, self.w_1];
        ids.extend(self.inner.param_ids());
        ids
    }
}

/// Embedded features `σ(h · W_p)` (n×D) and their scores (n×1).
pub fn score_nodes(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    params: &PoolingParams,
) -> Result<(Var, Var)> {
    if tape.value(h).rows() == 0 {
        return Err(SamgcError::Shape("cannot score an empty node set".into()));
    }
    let w_p = tape.param(store, params.w_p);
    let w_1 = tape.param(store, params.w_1);
    let emb = tape.matmul(h, w_p)?;
    let emb = tape.activation(emb, params.act);
    let logits = tape.matmul(emb, w_1)?;
    let row = tape.transpose(logits);
    let probs = tape.row_softmax(row);
    Ok((emb, tape.transpose(probs)))
}

/// Indices of the `w` highest scores, ties to the lower index, returned in
/// ascending index order.
pub fn top_w(scores: &[f64], w: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = order[..w.min(order.len())].to_vec();
    keep.sort_unstable();
    keep
}

#[derive(Clone, Debug)]
pub struct PoolingOutput {
    pub selected: Vec<usize>,
    /// Refined rows of the kept nodes, w×C_out.
    pub h_select: Var,
    pub pooled_graph: Graph,
    pub scores: Vec<f64>,
}

pub fn pool(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    g: &Graph,
    params: &PoolingParams,
    next_graph: PooledGraph,
) -> Result<PoolingOutput> {
    let n = g.n();
    if tape.value(h).rows() != n {
        return Err(SamgcError::Shape(format!(
            "{} feature rows for a graph of {n} nodes",
            tape.value(h).rows()
        )));
    }
    let w = params.size.resolve(n)?;
    let (emb, scores) = score_nodes(tape, store, h, params)?;
    let scaled = tape.scale_rows(emb, scores)?;
    let hops = exact_hop_sets(g, 1)?;
    let refined = params.inner.forward(tape, store, scaled, g, &hops)?;

    let score_values = tape.value(scores).data().to_vec();
    let selected = top_w(&score_values, w);
    let h_select = tape.gather_rows(refined, Arc::from(selected.as_slice()))?;
    let pooled_graph = match next_graph {
        PooledGraph::Induced => induced_subgraph(g, &selected)?,
        PooledGraph::Knn(_) if w == 1 => Graph::empty(1),
        PooledGraph::Knn(k) => build_knn_graph(tape.value(h_select), k.min(w - 1))?,
    };
    Ok(PoolingOutput {
        selected,
        h_select,
        pooled_graph,
        scores: score_values,
    })
}
