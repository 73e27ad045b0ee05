//! The SAMGC layer and its three ablation variants.
//!
//! A layer maps node features `h` (n×C) to `z` (n×C_out). For each node `v`
//! the integration input is the concatenation
//!
//! ```text
//! h_v | mean_u(h_u, fa_uv, fd_uv, re_uv, nw_u) | mean h over N_2(v) | ... | mean h over N_t(v)
//! ```
//!
//! and `z_v = σ(input · W)`. The variants drop blocks from that input:
//! `graphsage` keeps `h_v | mean h_u`, `sagc` adds the structural features,
//! `nwa_sagc` adds `nw_u`, and `samgc` adds the multi-hop means.
//!
//! The batched forward never materialises the concatenation. It multiplies
//! each block by the matching row block of `W` and sums the products, which
//! is the same matrix product split along the inner dimension.

mod node;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Activation, ParamId, ParamStore, Reduce, Tape, Var};
use crate::error::{Result, SamgcError};
use crate::features::{edge_features, StructuralParams};
use crate::graph::{Graph, HopSets};
use crate::tensor::Tensor;

pub use node::{integrate, multi_hop_aggregate, neighbor_wise, node_reference, one_hop_aggregate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    GraphSage,
    Sagc,
    NwaSagc,
    Samgc,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::GraphSage, Variant::Sagc, Variant::NwaSagc, Variant::Samgc];

    pub fn name(self) -> &'static str {
        match self {
            Variant::GraphSage => "graphsage",
            Variant::Sagc => "sagc",
            Variant::NwaSagc => "nwa_sagc",
            Variant::Samgc => "samgc",
        }
    }

    pub fn uses_structure(self) -> bool {
        self != Variant::GraphSage
    }

    pub fn uses_neighbor_wise(self) -> bool {
        matches!(self, Variant::NwaSagc | Variant::Samgc)
    }

    pub fn uses_multi_hop(self) -> bool {
        self == Variant::Samgc
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = SamgcError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                SamgcError::Config(format!(
                    "unknown variant `{s}` (expected graphsage, sagc, nwa_sagc or samgc)"
                ))
            })
    }
}

/// Static shape and behavior of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub re_dim: usize,
    pub nw_dim: usize,
    /// Hop count `t`; only the `samgc` variant reads beyond one hop.
    pub hops: usize,
    pub variant: Variant,
    /// σ inside the base-vector, relational-embedding MLPs.
    pub feature_act: Activation,
    /// σ of the neighbor-wise mixing and the integration.
    pub output_act: Activation,
}

impl LayerSpec {
    pub fn new(c_in: usize, c_out: usize) -> Self {
        LayerSpec {
            c_in,
            c_out,
            re_dim: 16,
            nw_dim: 16,
            hops: 2,
            variant: Variant::Samgc,
            feature_act: Activation::LeakyRelu(0.01),
            output_act: Activation::Relu,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_hops(mut self, hops: usize) -> Self {
        self.hops = hops;
        self
    }

    pub fn with_dims(mut self, re_dim: usize, nw_dim: usize) -> Self {
        self.re_dim = re_dim;
        self.nw_dim = nw_dim;
        self
    }

    pub fn with_output_act(mut self, act: Activation) -> Self {
        self.output_act = act;
        self
    }

    /// Width of `cat(h_u, fa, fd, re)`.
    pub fn edge_width(&self) -> usize {
        2 * self.c_in + 1 + self.re_dim
    }

    /// Width of the mean-aggregated neighbor block.
    pub fn af_width(&self) -> usize {
        let v = self.variant;
        match v {
            Variant::GraphSage => self.c_in,
            _ if v.uses_neighbor_wise() => self.edge_width() + self.nw_dim,
            _ => self.edge_width(),
        }
    }

    /// Width of the multi-hop block.
    pub fn nh_width(&self) -> usize {
        if self.variant.uses_multi_hop() {
            self.c_in * self.hops.saturating_sub(1)
        } else {
            0
        }
    }

    /// Row count of `W`.
    pub fn input_width(&self) -> usize {
        self.c_in + self.af_width() + self.nh_width()
    }

    fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 {
            return Err(SamgcError::Config("layer widths must be positive".into()));
        }
        if self.hops == 0 {
            return Err(SamgcError::Config("hop count t must be at least 1".into()));
        }
        if self.variant.uses_structure() && self.re_dim == 0 {
            return Err(SamgcError::Config("re_dim must be positive".into()));
        }
        if self.variant.uses_neighbor_wise() && self.nw_dim == 0 {
            return Err(SamgcError::Config("nw_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Parameters of one layer, registered in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct SamgcLayer {
    spec: LayerSpec,
    structural: Option<StructuralParams>,
    w_nw: Option<ParamId>,
    w: ParamId,
}

impl SamgcLayer {
    /// Registers Glorot-initialised weights under `name.*`. Variants without
    /// structural features allocate no `W_gb`, `W_re` or `W_nw`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        spec: LayerSpec,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        let structural = spec
            .variant
            .uses_structure()
            .then(|| StructuralParams::new(store, name, spec.c_in, spec.re_dim, rng));
        let w_nw = spec.variant.uses_neighbor_wise().then(|| {
            store.add(
                format!("{name}.w_nw"),
                Tensor::glorot_with(spec.edge_width(), spec.nw_dim, rng),
            )
        });
        let w = store.add(
            format!("{name}.w"),
            Tensor::glorot_with(spec.input_width(), spec.c_out, rng),
        );
        Ok(SamgcLayer {
            spec,
            structural,
            w_nw,
            w,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn structural(&self) -> Option<&StructuralParams> {
        self.structural.as_ref()
    }

    pub fn w_nw(&self) -> Option<ParamId> {
        self.w_nw
    }

    pub fn w(&self) -> ParamId {
        self.w
    }

    /// Every parameter this layer owns.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        if let Some(s) = &self.structural {
            ids.extend([s.w_gb, s.w_re]);
        }
        ids.extend(self.w_nw);
        ids.push(self.w);
        ids
    }

    /// Records the layer on `tape`. `hops` must come from `g` and reach at
    /// least `t` for the `samgc` variant.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        g: &Graph,
        hops: &HopSets,
    ) -> Result<Var> {
        let spec = &self.spec;
        let (n, c) = tape.value(h).shape();
        if c != spec.c_in {
            return Err(SamgcError::Shape(format!(
                "layer expects {} input features, got {c}",
                spec.c_in
            )));
        }
        if n != g.n() || hops.n() != g.n() {
            return Err(SamgcError::Shape(format!(
                "{n} feature rows for a graph of {} nodes with hop sets over {}",
                g.n(),
                hops.n()
            )));
        }
        if spec.variant.uses_multi_hop() && hops.t() < spec.hops {
            return Err(SamgcError::Config(format!(
                "hop sets reach {} hops but the layer needs t = {}",
                hops.t(),
                spec.hops
            )));
        }

        let adj = g.adjacency();
        let mut blocks = vec![h, tape.csr_mean(h, adj)?];
        if let Some(sp) = &self.structural {
            let ef = edge_features(tape, store, h, adj, sp, spec.feature_act)?;
            blocks.push(tape.segment_reduce(ef.fa, adj, Reduce::Mean)?);
            blocks.push(ef.fd_mean);
            blocks.push(tape.segment_reduce(ef.re, adj, Reduce::Mean)?);
            if let Some(w_nw) = self.w_nw {
                let nw = self.neighbor_wise_edges(tape, store, w_nw, h, adj, ef.fa, ef.re)?;
                blocks.push(tape.segment_reduce(nw, adj, Reduce::Mean)?);
            }
        }
        if spec.variant.uses_multi_hop() {
            for i in 2..=spec.hops {
                blocks.push(tape.csr_mean(h, hops.hop(i))?);
            }
        }

        let w = tape.param(store, self.w);
        let pre = block_product(tape, &blocks, w)?;
        Ok(tape.activation(pre, spec.output_act))
    }

    /// `σ(cat(h_u, fa, fd, re) · W_nw)` for every edge.
    #[allow(clippy::too_many_arguments)]
    fn neighbor_wise_edges(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        w_nw: ParamId,
        h: Var,
        adj: &Arc<crate::csr::Csr>,
        fa: Var,
        re: Var,
    ) -> Result<Var> {
        let c = self.spec.c_in;
        let w = tape.param(store, w_nw);
        let w_h = tape.row_block(w, 0, c)?;
        let w_fa = tape.row_block(w, c, 1)?;
        let w_fd = tape.row_block(w, c + 1, c)?;
        let w_re = tape.row_block(w, 2 * c + 1, self.spec.re_dim)?;
        let hu = tape.matmul(h, w_h)?;
        let hu = tape.gather_rows(hu, Arc::from(adj.indices()))?;
        let fd = tape.abs_diff_matmul(h, w_fd, adj)?;
        let fa = tape.matmul(fa, w_fa)?;
        let re = tape.matmul(re, w_re)?;
        let mut pre = tape.add(hu, fa)?;
        pre = tape.add(pre, fd)?;
        pre = tape.add(pre, re)?;
        Ok(tape.activation(pre, self.spec.output_act))
    }
}

/// `cat(blocks) · w`, computed as a sum of block products.
pub(crate) fn block_product(tape: &mut Tape, blocks: &[Var], w: Var) -> Result<Var> {
    let total: usize = blocks.iter().map(|&b| tape.value(b).cols()).sum();
    if total != tape.value(w).rows() {
        return Err(SamgcError::Shape(format!(
            "blocks of total width {total} against weight with {} rows",
            tape.value(w).rows()
        )));
    }
    let mut acc: Option<Var> = None;
    let mut off = 0;
    for &b in blocks {
        let width = tape.value(b).cols();
        let wb = tape.row_block(w, off, width)?;
        let p = tape.matmul(b, wb)?;
        acc = Some(match acc {
            None => p,
            Some(a) => tape.add(a, p)?,
        });
        off += width;
    }
    acc.ok_or_else(|| SamgcError::Shape("no blocks to integrate".into()))
}
