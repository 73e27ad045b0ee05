//! Structural features of a node's one-hop neighborhood in feature space:
//! feature angle, feature distance and relational embedding.
//!
//! Two evaluation paths are provided. The per-node functions take plain
//! slices and are what gets inspected or dumped; [`edge_features`] builds
//! the same quantities for every edge at once on a [`Tape`] so they can be
//! trained.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Activation, ParamId, ParamStore, Tape, Var};
use crate::csr::Csr;
use crate::error::{Result, SamgcError};
use crate::graph::Graph;
use crate::tensor::{self, Tensor};

/// Norms below this make the feature angle 0.
pub const ANGLE_EPS: f64 = 1e-12;

/// Weights of the two single-layer MLPs: the base-vector map (C×C) and the
/// relational-embedding map (C×R).
#[derive(Clone, Debug)]
pub struct StructuralParams {
    pub w_gb: ParamId,
    pub w_re: ParamId,
    pub re_dim: usize,
}

impl StructuralParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        c: usize,
        re_dim: usize,
        rng: &mut R,
    ) -> Self {
        let w_gb = store.add(format!("{prefix}.w_gb"), Tensor::glorot_with(c, c, rng));
        let w_re = store.add(format!("{prefix}.w_re"), Tensor::glorot_with(c, re_dim, rng));
        StructuralParams { w_gb, w_re, re_dim }
    }
}

/// `x · w` for a single row vector.
pub(crate) fn row_times(x: &[f64], w: &Tensor) -> Result<Vec<f64>> {
    if x.len() != w.rows() {
        return Err(SamgcError::Shape(format!(
            "vector of length {} times {}x{} matrix",
            x.len(),
            w.rows(),
            w.cols()
        )));
    }
    let mut out = vec![0.0; w.cols()];
    for (p, &xp) in x.iter().enumerate() {
        if xp != 0.0 {
            tensor::axpy(xp, w.row(p), &mut out);
        }
    }
    Ok(out)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `h_u - h_v` for every neighbor `u` of `v`, ascending by `u`.
pub fn difference_vectors(h: &Tensor, g: &Graph, v: usize) -> Vec<Vec<f64>> {
    g.neighbors(v)
        .iter()
        .map(|&u| sub(h.row(u), h.row(v)))
        .collect()
}

/// Columnwise max of `σ(g_uv · W_gb)` over the difference vectors.
pub fn base_vector(diffs: &[Vec<f64>], w_gb: &Tensor, act: Activation) -> Result<Vec<f64>> {
    if diffs.is_empty() {
        return Err(SamgcError::EmptyReduction(
            "base vector of a node without neighbors".into(),
        ));
    }
    let mut best = vec![f64::NEG_INFINITY; w_gb.cols()];
    for d in diffs {
        for (b, y) in best.iter_mut().zip(row_times(d, w_gb)?) {
            *b = b.max(act.apply(y));
        }
    }
    Ok(best)
}

/// Cosine of the angle between `g_uv` and `g_b`; 0 if either is (near) zero.
pub fn feature_angle(g_uv: &[f64], g_b: &[f64]) -> f64 {
    let (na, nb) = (tensor::norm(g_uv), tensor::norm(g_b));
    if na < ANGLE_EPS || nb < ANGLE_EPS {
        return 0.0;
    }
    (tensor::dot(g_uv, g_b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Elementwise `|h_u - h_v|`.
pub fn feature_distance(h_u: &[f64], h_v: &[f64]) -> Result<Vec<f64>> {
    if h_u.len() != h_v.len() {
        return Err(SamgcError::Shape(format!(
            "feature distance between lengths {} and {}",
            h_u.len(),
            h_v.len()
        )));
    }
    Ok(h_u.iter().zip(h_v).map(|(a, b)| (a - b).abs()).collect())
}

/// `σ((h_u - h_v) · W_re)`.
pub fn relational_embedding(
    h_u: &[f64],
    h_v: &[f64],
    w_re: &Tensor,
    act: Activation,
) -> Result<Vec<f64>> {
    if h_u.len() != h_v.len() {
        return Err(SamgcError::Shape(format!(
            "relational embedding between lengths {} and {}",
            h_u.len(),
            h_v.len()
        )));
    }
    Ok(row_times(&sub(h_u, h_v), w_re)?
        .into_iter()
        .map(|y| act.apply(y))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborEntry {
    pub u: usize,
    pub g_uv: Vec<f64>,
    pub fa: f64,
    pub fd: Vec<f64>,
    pub re: Vec<f64>,
}

/// All structural features around one target node.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborBundle {
    pub v: usize,
    /// Zero vector for isolated nodes.
    pub g_b: Vec<f64>,
    pub entries: Vec<NeighborEntry>,
}

pub fn neighbor_bundle(
    h: &Tensor,
    g: &Graph,
    v: usize,
    w_gb: &Tensor,
    w_re: &Tensor,
    act: Activation,
) -> Result<NeighborBundle> {
    let diffs = difference_vectors(h, g, v);
    if diffs.is_empty() {
        return Ok(NeighborBundle {
            v,
            g_b: vec![0.0; w_gb.cols()],
            entries: Vec::new(),
        });
    }
    let g_b = base_vector(&diffs, w_gb, act)?;
    let mut entries = Vec::with_capacity(diffs.len());
    for (&u, g_uv) in g.neighbors(v).iter().zip(diffs) {
        entries.push(NeighborEntry {
            u,
            fa: feature_angle(&g_uv, &g_b),
            fd: feature_distance(h.row(u), h.row(v))?,
            re: relational_embedding(h.row(u), h.row(v), w_re, act)?,
            g_uv,
        });
    }
    Ok(NeighborBundle { v, g_b, entries })
}

/// Edge-level features recorded on a tape. Edge rows follow the adjacency
/// order: all neighbors of node 0 ascending, then node 1, and so on.
#[derive(Clone, Copy, Debug)]
pub struct EdgeFeatures {
    /// `g_b` per target node, n×C.
    pub base: Var,
    /// E×1.
    pub fa: Var,
    /// Mean of `|h_u - h_v|` over each neighborhood, n×C. The per-edge rows
    /// are never stored; [`Tape::abs_diff_matmul`] projects them directly.
    pub fd_mean: Var,
    /// E×R.
    pub re: Var,
}

/// Batched structural features for every edge of `adj`.
///
/// Both MLPs are linear before σ, so `(h_u - h_v) · W` is formed as the
/// difference of node-level products `h · W`.
pub fn edge_features(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    adj: &Arc<Csr>,
    params: &StructuralParams,
    act: Activation,
) -> Result<EdgeFeatures> {
    let w_gb = tape.param(store, params.w_gb);
    let w_re = tape.param(store, params.w_re);
    let proj = tape.matmul(h, w_gb)?;
    let base = tape.segment_max_act_diff(proj, adj, act)?;
    let fa = tape.edge_cosine_diff(h, base, adj)?;
    let fd_mean = tape.segment_mean_abs_diff(h, adj)?;
    let re = tape.matmul(h, w_re)?;
    let re = tape.gather_diff(re, adj)?;
    let re = tape.activation(re, act);
    Ok(EdgeFeatures {
        base,
        fa,
        fd_mean,
        re,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const LEAKY: Activation = Activation::LeakyRelu(0.01);

    fn rand_t(r: usize, c: usize, seed: u64) -> Tensor {
        Tensor::glorot(r, c, seed).map(|v| v * 3.0)
    }

    fn random_graph(n: usize, seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random::<f64>() < 0.35 {
                    edges.push((a, b));
                }
            }
        }
        Graph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn difference_vector_examples() {
        let h = Tensor::from_rows(&[[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]]).unwrap();
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        // h_u = h_v
        assert_eq!(difference_vectors(&h, &g, 0)[0], vec![0.0, 0.0]);
        // h_v = 0
        assert_eq!(difference_vectors(&h, &g, 2), vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
        // antisymmetry
        let d01 = &difference_vectors(&h, &g, 0)[1];
        let d20 = &difference_vectors(&h, &g, 2)[0];
        assert!(d01.iter().zip(d20).all(|(a, b)| *a == -*b));
        assert!(difference_vectors(&h, &Graph::empty(3), 1).is_empty());
    }

    #[test]
    fn base_vector_examples() {
        let w = rand_t(3, 3, 1);
        let d = vec![0.3, -1.2, 0.8];
        let single = base_vector(std::slice::from_ref(&d), &w, LEAKY).unwrap();
        let direct: Vec<f64> = row_times(&d, &w).unwrap().into_iter().map(|y| LEAKY.apply(y)).collect();
        assert_eq!(single, direct);
        let dup = base_vector(&[d.clone(), d.clone()], &w, LEAKY).unwrap();
        assert_eq!(dup, single);
        assert!(base_vector(&[], &w, LEAKY).is_err());

        let diffs = vec![vec![1.0, 0.5, 2.0], vec![0.2, 3.0, 1.0], vec![4.0, 0.1, 0.3]];
        let gb = base_vector(&diffs, &Tensor::identity(3), Activation::Relu).unwrap();
        assert_eq!(gb, vec![4.0, 3.0, 2.0]);
    }

    #[test]
    fn feature_angle_examples() {
        let b = [1.0, -2.0, 0.5];
        assert!((feature_angle(&b, &b) - 1.0).abs() < 1e-15);
        assert_eq!(feature_angle(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        let neg: Vec<f64> = b.iter().map(|x| -x).collect();
        assert!((feature_angle(&neg, &b) + 1.0).abs() < 1e-15);
        assert_eq!(feature_angle(&[0.0, 0.0, 0.0], &b), 0.0);
    }

    #[test]
    fn feature_distance_examples() {
        assert_eq!(feature_distance(&[1.0, -2.0], &[-1.0, 1.0]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(feature_distance(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), vec![0.0, 0.0]);
        let (a, b) = ([0.1, 7.0, -3.0], [2.0, -1.0, -3.5]);
        assert_eq!(feature_distance(&a, &b).unwrap(), feature_distance(&b, &a).unwrap());
        assert!(feature_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn relational_embedding_examples() {
        let w = rand_t(4, 3, 2);
        let h = [0.4, -0.1, 2.0, 1.0];
        assert_eq!(relational_embedding(&h, &h, &w, LEAKY).unwrap(), vec![0.0; 3]);
        let hu = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(
            relational_embedding(&hu, &h, &Tensor::zeros(4, 3), LEAKY).unwrap(),
            vec![0.0; 3]
        );
        // triple-loop oracle
        let got = relational_embedding(&hu, &h, &w, LEAKY).unwrap();
        for j in 0..3 {
            let mut s = 0.0;
            for p in 0..4 {
                s += (hu[p] - h[p]) * w.get(p, j);
            }
            let want = if s > 0.0 { s } else { 0.01 * s };
            assert!((got[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_features_match_per_node_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..10 {
            let n = 9;
            let g = random_graph(n, seed);
            let h0 = rand_t(n, 4, seed + 100);
            let mut store = ParamStore::new();
            let sp = StructuralParams::new(&mut store, "s", 4, 3, &mut rng);
            let mut tape = Tape::new();
            let h = tape.constant(h0.clone());
            let ef = edge_features(&mut tape, &store, h, g.adjacency(), &sp, LEAKY).unwrap();
            let adj = g.adjacency();
            for v in 0..n {
                let b = neighbor_bundle(&h0, &g, v, store.value(sp.w_gb), store.value(sp.w_re), LEAKY)
                    .unwrap();
                for (k, e) in adj.range(v).enumerate() {
                    let ent = &b.entries[k];
                    assert_eq!(ent.u, adj.indices()[e]);
                    assert!((tape.value(ef.fa).data()[e] - ent.fa).abs() < 1e-12);
                    for j in 0..3 {
                        assert!((tape.value(ef.re).get(e, j) - ent.re[j]).abs() < 1e-12);
                    }
                }
                let deg = b.entries.len().max(1) as f64;
                for j in 0..4 {
                    assert!((tape.value(ef.base).get(v, j) - b.g_b[j]).abs() < 1e-12);
                    let fd: f64 = b.entries.iter().map(|e| e.fd[j]).sum::<f64>() / deg;
                    assert!((tape.value(ef.fd_mean).get(v, j) - fd).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn isolated_node_features_are_zero() {
        let h = rand_t(3, 2, 5);
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let b = neighbor_bundle(&h, &g, 2, &rand_t(2, 2, 6), &rand_t(2, 2, 7), LEAKY).unwrap();
        assert!(b.entries.is_empty());
        assert_eq!(b.g_b, vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn feature_properties(seed in 0u64..500, n in 2usize..10, c in 1usize..5) {
            let g = random_graph(n, seed);
            let h = rand_t(n, c, seed ^ 0xabc);
            let w_gb = rand_t(c, c, seed + 1);
            let w_re = rand_t(c, 2, seed + 2);
            for v in 0..n {
                let b = neighbor_bundle(&h, &g, v, &w_gb, &w_re, LEAKY).unwrap();
                for e in &b.entries {
                    prop_assert!((-1.0..=1.0).contains(&e.fa));
                    prop_assert!(e.fd.iter().all(|&x| x >= 0.0));
                    let same = h.row(e.u) == h.row(v);
                    prop_assert_eq!(e.fd.iter().all(|&x| x == 0.0), same);
                }
                // max is order independent
                let mut diffs = difference_vectors(&h, &g, v);
                if !diffs.is_empty() {
                    let gb = base_vector(&diffs, &w_gb, LEAKY).unwrap();
                    diffs.reverse();
                    prop_assert_eq!(base_vector(&diffs, &w_gb, LEAKY).unwrap(), gb);
                }
            }
        }
    }
}
