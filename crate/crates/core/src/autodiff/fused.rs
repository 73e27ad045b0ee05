//! Edge ops that read `x[u] - x[v]` on the fly instead of storing one
//! difference row per edge. Each equals a composition of
//! [`Tape::gather_diff`] with a later op, at O(n·d) memory instead of O(E·d).

use std::sync::Arc;

use super::tape::{check_csr, Activation, Op, Tape, Var, COSINE_EPS};
use crate::csr::Csr;
use crate::error::{Result, SamgcError};
use crate::tensor::{self, Tensor};

/// Writes `x[u] - x[v]` into `buf`.
pub(super) fn diff_into(x: &Tensor, u: usize, v: usize, buf: &mut [f64]) {
    for ((o, a), b) in buf.iter_mut().zip(x.row(u)).zip(x.row(v)) {
        *o = a - b;
    }
}

impl Tape {
    /// `out[v, j] = max over entries u of segment v of act(x[u, j] - x[v, j])`;
    /// zero rows for empty segments. Gradient goes to one maximising entry,
    /// the earliest one for strictly increasing `act`.
    pub fn segment_max_act_diff(&mut self, x: Var, csr: &Arc<Csr>, act: Activation) -> Result<Var> {
        let (n, d) = self.shape(x);
        check_csr(csr, n, n)?;
        let src = &self.values[x.0];
        let mut out = Tensor::zeros(n, d);
        let mut argmax = vec![usize::MAX; n * d];
        for v in 0..n {
            let range = csr.range(v);
            if range.is_empty() {
                continue;
            }
            let hv = src.row(v);
            let orow = out.row_mut(v);
            orow.fill(f64::NEG_INFINITY);
            let am = &mut argmax[v * d..(v + 1) * d];
            if act.is_monotone() {
                // max of act(d) is act(max d): scan raw differences
                for e in range {
                    let hu = src.row(csr.indices()[e]);
                    for j in 0..d {
                        let y = hu[j] - hv[j];
                        if y > orow[j] {
                            orow[j] = y;
                            am[j] = e;
                        }
                    }
                }
                for o in orow.iter_mut() {
                    *o = act.apply(*o);
                }
            } else {
                for e in range {
                    let hu = src.row(csr.indices()[e]);
                    for j in 0..d {
                        let y = act.apply(hu[j] - hv[j]);
                        if y > orow[j] {
                            orow[j] = y;
                            am[j] = e;
                        }
                    }
                }
            }
        }
        let r = self.req(&[x]);
        Ok(self.push(out, Op::SegmentMaxActDiff(x, Arc::clone(csr), act, argmax), r))
    }

    /// Cosine between `x[u] - x[v]` and `base[v]` for every entry `u` of
    /// segment `v`, as an E×1 column.
    pub fn edge_cosine_diff(&mut self, x: Var, base: Var, csr: &Arc<Csr>) -> Result<Var> {
        let (n, d) = self.shape(x);
        check_csr(csr, n, n)?;
        if self.shape(base) != (n, d) {
            let (br, bc) = self.shape(base);
            return Err(SamgcError::shape(format!(
                "edge cosine of {n}x{d} features against {br}x{bc} bases"
            )));
        }
        let (xv, bv) = (&self.values[x.0], &self.values[base.0]);
        let mut out = Tensor::zeros(csr.nnz(), 1);
        let mut buf = vec![0.0; d];
        for v in 0..n {
            let b = bv.row(v);
            let nb = tensor::norm(b);
            if nb < COSINE_EPS {
                continue;
            }
            for e in csr.range(v) {
                diff_into(xv, csr.indices()[e], v, &mut buf);
                let na = tensor::norm(&buf);
                if na >= COSINE_EPS {
                    out.data_mut()[e] = (tensor::dot(&buf, b) / (na * nb)).clamp(-1.0, 1.0);
                }
            }
        }
        let r = self.req(&[x, base]);
        Ok(self.push(out, Op::EdgeCosineDiff(x, base, Arc::clone(csr)), r))
    }

    /// `out[v] = mean over entries u of segment v of |x[u] - x[v]|`.
    pub fn segment_mean_abs_diff(&mut self, x: Var, csr: &Arc<Csr>) -> Result<Var> {
        let (n, d) = self.shape(x);
        check_csr(csr, n, n)?;
        let src = &self.values[x.0];
        let mut out = Tensor::zeros(n, d);
        for v in 0..n {
            let range = csr.range(v);
            if range.is_empty() {
                continue;
            }
            let inv = 1.0 / range.len() as f64;
            let hv = src.row(v);
            let orow = out.row_mut(v);
            for e in range {
                for ((o, a), b) in orow.iter_mut().zip(src.row(csr.indices()[e])).zip(hv) {
                    *o += (a - b).abs();
                }
            }
            orow.iter_mut().for_each(|o| *o *= inv);
        }
        let r = self.req(&[x]);
        Ok(self.push(out, Op::SegmentMeanAbsDiff(x, Arc::clone(csr)), r))
    }

    /// `out[e] = |x[u] - x[v]| · w` for every entry `e = (v, u)`, E×k.
    pub fn abs_diff_matmul(&mut self, x: Var, w: Var, csr: &Arc<Csr>) -> Result<Var> {
        let (n, d) = self.shape(x);
        check_csr(csr, n, n)?;
        let (wr, k) = self.shape(w);
        if wr != d {
            return Err(SamgcError::shape(format!(
                "|diff| of width {d} times {wr}x{k} matrix"
            )));
        }
        let (xv, wv) = (&self.values[x.0], &self.values[w.0]);
        let mut out = Tensor::zeros(csr.nnz(), k);
        let mut buf = vec![0.0; d];
        for v in 0..n {
            for e in csr.range(v) {
                diff_into(xv, csr.indices()[e], v, &mut buf);
                let orow = out.row_mut(e);
                for (j, &dj) in buf.iter().enumerate() {
                    if dj != 0.0 {
                        tensor::axpy(dj.abs(), wv.row(j), orow);
                    }
                }
            }
        }
        let r = self.req(&[x, w]);
        Ok(self.push(out, Op::AbsDiffMatmul(x, w, Arc::clone(csr)), r))
    }
}
