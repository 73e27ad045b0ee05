use std::sync::Arc;

use rand::Rng;

use crate::autodiff::param::{ParamId, ParamStore};
use crate::csr::Csr;
use crate::error::{Result, SamgcError};
use crate::tensor::{self, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    /// `max(alpha * x, x)`.
    LeakyRelu(f64),
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
        }
    }

    /// True when `apply` never decreases, so it commutes with max.
    pub fn is_monotone(self) -> bool {
        match self {
            Activation::LeakyRelu(a) => a >= 0.0,
            _ => true,
        }
    }

    /// Derivative evaluated at the pre-activation `x`; 0 counts as negative.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Max,
    Mean,
}

#[derive(Debug)]
pub(super) enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleRows(Var, Var),
    Act(Var, Activation),
    Abs(Var),
    Concat(Vec<Var>),
    RowBlock(Var, usize),
    Transpose(Var),
    ReduceRows(Var, Reduce, Vec<usize>),
    SumAll(Var),
    RowSoftmax(Var),
    CrossEntropy {
        logits: Var,
        rows: Vec<usize>,
        labels: Vec<usize>,
        probs: Tensor,
    },
    GatherRows(Var, Arc<[usize]>),
    GatherDiff(Var, Arc<Csr>),
    SegmentMax(Var, Arc<Csr>, Vec<usize>),
    SegmentMean(Var, Arc<Csr>),
    CsrMean(Var, Arc<Csr>),
    EdgeCosine(Var, Var, Arc<Csr>),
    SegmentMaxActDiff(Var, Arc<Csr>, Activation, Vec<usize>),
    EdgeCosineDiff(Var, Var, Arc<Csr>),
    SegmentMeanAbsDiff(Var, Arc<Csr>),
    AbsDiffMatmul(Var, Var, Arc<Csr>),
    MaskMul(Var, Tensor),
}

/// Records a forward pass so it can be differentiated once in reverse.
///
/// Values, gradients and op records are kept in parallel arrays indexed by
/// [`Var`]; every op's inputs precede it, so a reverse sweep over indices
/// is a valid topological order.
#[derive(Debug, Default)]
pub struct Tape {
    pub(super) values: Vec<Tensor>,
    pub(super) grads: Vec<Option<Tensor>>,
    pub(super) ops: Vec<Op>,
    pub(super) requires: Vec<bool>,
    pub(super) params: Vec<(ParamId, Var)>,
    pub(super) consumed: bool,
}

pub(super) const COSINE_EPS: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(super) fn push(&mut self, value: Tensor, op: Op, requires: bool) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.ops.push(op);
        self.requires.push(requires);
        Var(self.values.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a parameter as a gradient-tracked leaf; repeated calls for
    /// the same id return the same [`Var`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&(_, v)) = self.params.iter().find(|(p, _)| *p == id) {
            return v;
        }
        let v = self.variable(store.value(id).clone());
        self.params.push((id, v));
        v
    }

    pub fn param_links(&self) -> &[(ParamId, Var)] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    pub(super) fn req(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.requires[v.0])
    }

    pub(super) fn shape(&self, v: Var) -> (usize, usize) {
        self.values[v.0].shape()
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(SamgcError::shape(format!(
                "{what} of {}x{} and {}x{}",
                sa.0, sa.1, sb.0, sb.1
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.values[a.0].matmul(&self.values[b.0])?;
        let r = self.req(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), r))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.values[a.0].clone();
        out.add_assign(&self.values[b.0]);
        let r = self.req(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), r))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let mut out = self.values[a.0].clone();
        for (o, y) in out.data_mut().iter_mut().zip(self.values[b.0].data()) {
            *o -= y;
        }
        let r = self.req(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), r))
    }

    /// Adds a 1×d row to every row of an n×d matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (n, d) = self.shape(x);
        if self.shape(bias) != (1, d) {
            let (br, bc) = self.shape(bias);
            return Err(SamgcError::shape(format!(
                "row bias {br}x{bc} for a {n}x{d} matrix"
            )));
        }
        let mut out = self.values[x.0].clone();
        let b = self.values[bias.0].data();
        for i in 0..n {
            for (o, bj) in out.row_mut(i).iter_mut().zip(b) {
                *o += bj;
            }
        }
        let r = self.req(&[x, bias]);
        Ok(self.push(out, Op::AddRow(x, bias), r))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "elementwise product")?;
        let mut out = self.values[a.0].clone();
        for (o, y) in out.data_mut().iter_mut().zip(self.values[b.0].data()) {
            *o *= y;
        }
        let r = self.req(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), r))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.values[x.0].map(|v| v * c);
        let r = self.req(&[x]);
        self.push(out, Op::Scale(x, c), r)
    }

    /// Multiplies row `i` of an n×d matrix by entry `i` of an n×1 column.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (n, _) = self.shape(x);
        if self.shape(s) != (n, 1) {
            let (sr, sc) = self.shape(s);
            return Err(SamgcError::shape(format!(
                "row scales {sr}x{sc} for {n} rows"
            )));
        }
        let mut out = self.values[x.0].clone();
        for i in 0..n {
            let si = self.values[s.0].data()[i];
            out.row_mut(i).iter_mut().for_each(|v| *v *= si);
        }
        let r = self.req(&[x, s]);
        Ok(self.push(out, Op::ScaleRows(x, s), r))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return x;
        }
        let out = self.values[x.0].map(|v| act.apply(v));
        let r = self.req(&[x]);
        self.push(out, Op::Act(x, act), r)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        self.activation(x, Activation::LeakyRelu(alpha))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.values[x.0].map(f64::abs);
        let r = self.req(&[x]);
        self.push(out, Op::Abs(x), r)
    }

    /// Lays the parts out left to right. All parts must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| SamgcError::shape("concatenation of zero parts"))?;
        if parts.len() == 1 {
            return Ok(first);
        }
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(SamgcError::shape(format!(
                    "concatenating a part with {r} rows onto {rows} rows"
                )));
            }
            cols += c;
        }
        let mut out = Tensor::zeros(rows, cols);
        for i in 0..rows {
            let orow = out.row_mut(i);
            let mut off = 0;
            for &p in parts {
                let src = self.values[p.0].row(i);
                orow[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let r = self.req(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec()), r))
    }

    /// Rows `start..start + len` of `x`.
    pub fn row_block(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, d) = self.shape(x);
        if start + len > n {
            return Err(SamgcError::shape(format!(
                "row block {start}..{} of a {n}x{d} matrix",
                start + len
            )));
        }
        let src = self.values[x.0].data();
        let out = Tensor::new(len, d, src[start * d..(start + len) * d].to_vec())?;
        let r = self.req(&[x]);
        Ok(self.push(out, Op::RowBlock(x, start), r))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.values[x.0].transpose();
        let r = self.req(&[x]);
        self.push(out, Op::Transpose(x), r)
    }

    /// Columnwise max or mean, giving a 1×n row.
    pub fn reduce_rows(&mut self, x: Var, mode: Reduce) -> Result<Var> {
        let (m, n) = self.shape(x);
        if m == 0 {
            return Err(SamgcError::EmptyReduction(format!(
                "reduce_rows over a 0x{n} matrix"
            )));
        }
        let src = &self.values[x.0];
        let mut out = Tensor::zeros(1, n);
        let mut argmax = Vec::new();
        match mode {
            Reduce::Max => {
                argmax = vec![0; n];
                out.data_mut().copy_from_slice(src.row(0));
                for i in 1..m {
                    for (j, &v) in src.row(i).iter().enumerate() {
                        if v > out.data()[j] {
                            out.data_mut()[j] = v;
                            argmax[j] = i;
                        }
                    }
                }
            }
            Reduce::Mean => {
                for i in 0..m {
                    tensor::axpy(1.0, src.row(i), out.data_mut());
                }
                let inv = 1.0 / m as f64;
                out.data_mut().iter_mut().for_each(|v| *v *= inv);
            }
        }
        let r = self.req(&[x]);
        Ok(self.push(out, Op::ReduceRows(x, mode, argmax), r))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.values[x.0].data().iter().sum();
        let r = self.req(&[x]);
        self.push(Tensor::scalar(s), Op::SumAll(x), r)
    }

    /// Max-shifted softmax of every row.
    pub fn row_softmax(&mut self, x: Var) -> Var {
        let src = &self.values[x.0];
        let mut out = src.clone();
        for i in 0..out.rows() {
            softmax_in_place(out.row_mut(i));
        }
        let r = self.req(&[x]);
        self.push(out, Op::RowSoftmax(x), r)
    }

    /// Mean negative log-likelihood over `mask` rows (all rows if `None`).
    pub fn cross_entropy_mean(
        &mut self,
        logits: Var,
        labels: &[usize],
        mask: Option<&[usize]>,
    ) -> Result<Var> {
        let (m, c) = self.shape(logits);
        if labels.len() != m {
            return Err(SamgcError::shape(format!(
                "{} labels for {m} logit rows",
                labels.len()
            )));
        }
        let rows: Vec<usize> = match mask {
            Some(mk) => mk.to_vec(),
            None => (0..m).collect(),
        };
        if rows.is_empty() {
            return Err(SamgcError::EmptyReduction(
                "cross entropy over an empty row set".into(),
            ));
        }
        let x = &self.values[logits.0];
        let mut probs = Tensor::zeros(rows.len(), c);
        let mut picked = Vec::with_capacity(rows.len());
        let mut total = 0.0;
        for (k, &i) in rows.iter().enumerate() {
            if i >= m {
                return Err(SamgcError::Contract(format!(
                    "mask row {i} outside 0..{m}"
                )));
            }
            let y = labels[i];
            if y >= c {
                return Err(SamgcError::Data(format!(
                    "row {i}: label {y} outside 0..{c}"
                )));
            }
            let row = x.row(i);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            total += lse - row[y];
            let prow = probs.row_mut(k);
            for (p, v) in prow.iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
            picked.push(y);
        }
        let loss = Tensor::scalar(total / rows.len() as f64);
        let r = self.req(&[logits]);
        Ok(self.push(
            loss,
            Op::CrossEntropy {
                logits,
                rows,
                labels: picked,
                probs,
            },
            r,
        ))
    }

    /// Copies rows `idx[e]` of `x` into row `e` of the result.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var> {
        let n = self.shape(x).0;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(SamgcError::shape(format!(
                "gather of row {bad} from {n} rows"
            )));
        }
        let out = self.values[x.0].select_rows(&idx);
        let r = self.req(&[x]);
        Ok(self.push(out, Op::GatherRows(x, idx), r))
    }

    /// Per stored entry `e` of segment `v`: `x[indices[e]] - x[v]`.
    pub fn gather_diff(&mut self, x: Var, csr: &Arc<Csr>) -> Result<Var> {
        let (n, d) = self.shape(x);
        check_csr(csr, n, n)?;
        let src = &self.values[x.0];
        let mut out = Tensor::zeros(csr.nnz(), d);
        for v in 0..csr.segments() {
            let hv = src.row(v);
            for e in csr.range(v) {
                let hu = src.row(csr.indices()[e]);
                for ((o, a), b) in out.row_mut(e).iter_mut().zip(hu).zip(hv) {
                    *o = a - b;
                }
            }
        }
        let r = self.req(&[x]);
        Ok(self.push(out, Op::GatherDiff(x, Arc::clone(csr)), r))
    }

    /// Reduces the edge rows of each segment; empty segments give zero rows.
    /// Max ties go to the earliest edge row.
    pub fn segment_reduce(&mut self, x: Var, csr: &Arc<Csr>, mode: Reduce) -> Result<Var> {
        let (e_rows, d) = self.shape(x);
        if e_rows != csr.nnz() {
            return Err(SamgcError::shape(format!(
                "segment reduction of {e_rows} rows over {} entries",
                csr.nnz()
            )));
        }
        let src = &self.values[x.0];
        let segs = csr.segments();
        let mut out = Tensor::zeros(segs, d);
        let r = self.req(&[x]);
        match mode {
            Reduce::Max => {
                let mut argmax = vec![usize::MAX; segs * d];
                for v in 0..segs {
                    let range = csr.range(v);
                    if range.is_empty() {
                        continue;
                    }
                    let orow = out.row_mut(v);
                    orow.copy_from_slice(src.row(range.start));
                    let am = &mut argmax[v * d..(v + 1) * d];
                    am.fill(range.start);
                    for e in range.start + 1..range.end {
                        for (j, &val) in src.row(e).iter().enumerate() {
                            if val > orow[j] {
                                orow[j] = val;
                                am[j] = e;
                            }
                        }
                    }
                }
                Ok(self.push(out, Op::SegmentMax(x, Arc::clone(csr), argmax), r))
            }
            Reduce::Mean => {
                for v in 0..segs {
                    let range = csr.range(v);
                    if range.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / range.len() as f64;
                    let orow = out.row_mut(v);
                    for e in range {
                        tensor::axpy(1.0, src.row(e), orow);
                    }
                    orow.iter_mut().for_each(|o| *o *= inv);
                }
                Ok(self.push(out, Op::SegmentMean(x, Arc::clone(csr)), r))
            }
        }
    }

    /// `out[v] = mean of x[u]` over the entries `u` of segment `v`; zero
    /// rows for empty segments.
    pub fn csr_mean(&mut self, x: Var, csr: &Arc<Csr>) -> Result<Var> {
        let (n, d) = self.shape(x);
        check_csr(csr, csr.segments(), n)?;
        let src = &self.values[x.0];
        let mut out = Tensor::zeros(csr.segments(), d);
        for v in 0..csr.segments() {
            let seg = csr.segment(v);
            if seg.is_empty() {
                continue;
            }
            let orow = out.row_mut(v);
            for &u in seg {
                tensor::axpy(1.0, src.row(u), orow);
            }
            let inv = 1.0 / seg.len() as f64;
            orow.iter_mut().for_each(|o| *o *= inv);
        }
        let r = self.req(&[x]);
        Ok(self.push(out, Op::CsrMean(x, Arc::clone(csr)), r))
    }

    /// Cosine between edge row `e` of `g` and row `v` of `base` for every
    /// entry `e` of segment `v`. Zero when either norm is below 1e-12.
    pub fn edge_cosine(&mut self, g: Var, base: Var, csr: &Arc<Csr>) -> Result<Var> {
        let (e_rows, d) = self.shape(g);
        let (n, db) = self.shape(base);
        if e_rows != csr.nnz() || d != db || n != csr.segments() {
            return Err(SamgcError::shape(format!(
                "edge cosine of {e_rows}x{d} edges against {n}x{db} bases over {} segments of {} entries",
                csr.segments(),
                csr.nnz()
            )));
        }
        let gv = &self.values[g.0];
        let bv = &self.values[base.0];
        let mut out = Tensor::zeros(e_rows, 1);
        for v in 0..n {
            let b = bv.row(v);
            let nb = tensor::norm(b);
            for e in csr.range(v) {
                let a = gv.row(e);
                let na = tensor::norm(a);
                if na >= COSINE_EPS && nb >= COSINE_EPS {
                    out.data_mut()[e] = (tensor::dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
                }
            }
        }
        let r = self.req(&[g, base]);
        Ok(self.push(out, Op::EdgeCosine(g, base, Arc::clone(csr)), r))
    }

    /// Inverted dropout. Rate 0 returns `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(SamgcError::Config(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let (n, d) = self.shape(x);
        let keep = 1.0 / (1.0 - rate);
        let mask_data: Vec<f64> = (0..n * d)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mask = Tensor::new(n, d, mask_data)?;
        let mut out = self.values[x.0].clone();
        for (o, m) in out.data_mut().iter_mut().zip(mask.data()) {
            *o *= m;
        }
        let r = self.req(&[x]);
        Ok(self.push(out, Op::MaskMul(x, mask), r))
    }
}

pub(super) fn check_csr(csr: &Csr, segments: usize, rows: usize) -> Result<()> {
    if csr.segments() != segments {
        return Err(SamgcError::shape(format!(
            "index lists with {} segments applied to {segments} rows",
            csr.segments()
        )));
    }
    if let Some(mx) = csr.max_index() {
        if mx >= rows {
            return Err(SamgcError::shape(format!(
                "index {mx} out of range for {rows} rows"
            )));
        }
    }
    Ok(())
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - mx).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}
