//! Per-node evaluation of a layer on plain values, one step at a time.
//! Slow, but each function is a direct transcription of a single step and
//! is what the batched forward is tested against.

use crate::autodiff::{Activation, ParamStore};
use crate::error::{Result, SamgcError};
use crate::features::{neighbor_bundle, row_times, NeighborBundle};
use crate::graph::{Graph, HopSets};
use crate::layer::{LayerSpec, SamgcLayer};
use crate::tensor::Tensor;

/// `σ(cat(h_u, fa, fd, re) · W_nw)`.
pub fn neighbor_wise(
    h_u: &[f64],
    fa: f64,
    fd: &[f64],
    re: &[f64],
    w_nw: &Tensor,
    act: Activation,
) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(h_u.len() + 1 + fd.len() + re.len());
    x.extend_from_slice(h_u);
    x.push(fa);
    x.extend_from_slice(fd);
    x.extend_from_slice(re);
    Ok(row_times(&x, w_nw)?.into_iter().map(|y| act.apply(y)).collect())
}

/// Mean over the one-hop neighbors of the per-neighbor concatenation the
/// variant uses: `h_u` alone for graphsage, otherwise `cat(h_u, fa, fd, re)`
/// followed by `nw_u` when `nw` is nonempty. Zero vector without neighbors.
pub fn one_hop_aggregate(
    spec: &LayerSpec,
    h: &Tensor,
    bundle: &NeighborBundle,
    nw: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let width = spec.af_width();
    let mut sum = vec![0.0; width];
    if bundle.entries.is_empty() {
        return Ok(sum);
    }
    for (k, e) in bundle.entries.iter().enumerate() {
        let mut row: Vec<f64> = h.row(e.u).to_vec();
        if spec.variant.uses_structure() {
            row.push(e.fa);
            row.extend_from_slice(&e.fd);
            row.extend_from_slice(&e.re);
        }
        if spec.variant.uses_neighbor_wise() {
            row.extend_from_slice(nw.get(k).ok_or_else(|| {
                SamgcError::Shape(format!("missing neighbor-wise vector for neighbor {k}"))
            })?);
        }
        if row.len() != width {
            return Err(SamgcError::Shape(format!(
                "neighbor vector of width {} where {width} was expected",
                row.len()
            )));
        }
        for (s, x) in sum.iter_mut().zip(row) {
            *s += x;
        }
    }
    let inv = 1.0 / bundle.entries.len() as f64;
    Ok(sum.into_iter().map(|s| s * inv).collect())
}

/// Means of `h` over the exactly-`i`-hop neighbors of `v` for `i = 2..=t`,
/// concatenated in ascending `i`. Empty for `t = 1`.
pub fn multi_hop_aggregate(h: &Tensor, hops: &HopSets, v: usize, t: usize) -> Result<Vec<f64>> {
    if t > hops.t() {
        return Err(SamgcError::Config(format!(
            "hop sets reach {} hops, asked for {t}",
            hops.t()
        )));
    }
    let c = h.cols();
    let mut out = Vec::with_capacity(c * t.saturating_sub(1));
    for i in 2..=t {
        let members = hops.members(v, i);
        let mut mean = vec![0.0; c];
        for &u in members {
            for (m, x) in mean.iter_mut().zip(h.row(u)) {
                *m += x;
            }
        }
        if !members.is_empty() {
            let inv = 1.0 / members.len() as f64;
            mean.iter_mut().for_each(|m| *m *= inv);
        }
        out.extend(mean);
    }
    Ok(out)
}

/// `σ(cat(h_v, af, nh) · W)`.
pub fn integrate(
    h_v: &[f64],
    af: &[f64],
    nh: &[f64],
    w: &Tensor,
    act: Activation,
) -> Result<Vec<f64>> {
    let x: Vec<f64> = h_v.iter().chain(af).chain(nh).copied().collect();
    Ok(row_times(&x, w)?.into_iter().map(|y| act.apply(y)).collect())
}

/// Output row `z_v` of `layer`, evaluated through the per-node steps.
pub fn node_reference(
    layer: &SamgcLayer,
    store: &ParamStore,
    h: &Tensor,
    g: &Graph,
    hops: &HopSets,
    v: usize,
) -> Result<Vec<f64>> {
    let spec = layer.spec();
    let bundle = match layer.structural() {
        Some(sp) => neighbor_bundle(
            h,
            g,
            v,
            store.value(sp.w_gb),
            store.value(sp.w_re),
            spec.feature_act,
        )?,
        None => NeighborBundle {
            v,
            g_b: Vec::new(),
            entries: g
                .neighbors(v)
                .iter()
                .map(|&u| crate::features::NeighborEntry {
                    u,
                    g_uv: Vec::new(),
                    fa: 0.0,
                    fd: Vec::new(),
                    re: Vec::new(),
                })
                .collect(),
        },
    };
    let mut nw = Vec::new();
    if let Some(w_nw) = layer.w_nw() {
        for e in &bundle.entries {
            nw.push(neighbor_wise(
                h.row(e.u),
                e.fa,
                &e.fd,
                &e.re,
                store.value(w_nw),
                spec.output_act,
            )?);
        }
    }
    let af = one_hop_aggregate(spec, h, &bundle, &nw)?;
    let nh = if spec.variant.uses_multi_hop() {
        multi_hop_aggregate(h, hops, v, spec.hops)?
    } else {
        Vec::new()
    };
    integrate(h.row(v), &af, &nh, store.value(layer.w()), spec.output_act)
}
