use crate::autodiff::tape::{Op, Reduce, Tape, Var, COSINE_EPS};
use crate::error::{Result, SamgcError};
use crate::tensor::{self, Tensor};

/// Gradient accumulator for input `v`, or `None` when `v` is untracked.
fn slot<'a>(
    grads: &'a mut [Option<Tensor>],
    requires: &[bool],
    values: &[Tensor],
    v: Var,
) -> Option<&'a mut Tensor> {
    if !requires[v.0] {
        return None;
    }
    let (r, c) = values[v.0].shape();
    Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)))
}

impl Tape {
    /// Reverse sweep from a 1×1 `loss`. Gradients of tracked leaves are kept;
    /// intermediate gradients are released once propagated. A tape can be
    /// differentiated only once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(SamgcError::Contract(
                "backward already ran on this tape; record a new forward pass".into(),
            ));
        }
        let (r, c) = self.values[loss.0].shape();
        if (r, c) != (1, 1) {
            return Err(SamgcError::Contract(format!(
                "backward needs a 1x1 loss, got {r}x{c}"
            )));
        }
        self.consumed = true;
        if !self.requires[loss.0] {
            return Ok(());
        }
        self.grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if matches!(self.ops[i], Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &Tensor) {
        let values = &self.values;
        let requires = &self.requires;
        let grads = &mut self.grads;
        let out = &values[i];
        match &self.ops[i] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if let Some(ga) = slot(grads, requires, values, *a) {
                    tensor::gemm_nt(g, &values[b.0], ga);
                }
                if let Some(gb) = slot(grads, requires, values, *b) {
                    tensor::gemm_tn(&values[a.0], g, gb);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = slot(grads, requires, values, v) {
                        gv.add_assign(g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot(grads, requires, values, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = slot(grads, requires, values, *b) {
                    tensor::axpy(-1.0, g.data(), gb.data_mut());
                }
            }
            Op::AddRow(x, bias) => {
                if let Some(gx) = slot(grads, requires, values, *x) {
                    gx.add_assign(g);
                }
                if let Some(gb) = slot(grads, requires, values, *bias) {
                    for r in 0..g.rows() {
                        tensor::axpy(1.0, g.row(r), gb.data_mut());
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&values[a.0], &values[b.0]);
                if let Some(ga) = slot(grads, requires, values, *a) {
                    for ((o, gi), bi) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *o += gi * bi;
                    }
                }
                if let Some(gb) = slot(grads, requires, values, *b) {
                    for ((o, gi), ai) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(gx) = slot(grads, requires, values, *x) {
                    tensor::axpy(*c, g.data(), gx.data_mut());
                }
            }
            Op::ScaleRows(x, s) => {
                let (xv, sv) = (&values[x.0], &values[s.0]);
                if let Some(gx) = slot(grads, requires, values, *x) {
                    for r in 0..g.rows() {
                        tensor::axpy(sv.data()[r], g.row(r), gx.row_mut(r));
                    }
                }
                if let Some(gs) = slot(grads, requires, values, *s) {
                    for r in 0..g.rows() {
                        gs.data_mut()[r] += tensor::dot(g.row(r), xv.row(r));
                    }
                }
            }
            Op::Act(x, act) => {
                let xv = &values[x.0];
                if let Some(gx) = slot(grads, requires, values, *x) {
                    for ((o, gi), xi) in gx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        *o += gi * act.derivative(*xi);
                    }
                }
            }
            Op::Abs(x) => {
                let xv = &values[x.0];
                if let Some(gx) = slot(grads, requires, values, *x) {
                    for ((o, gi), xi) in gx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        if *xi > 0.0 {
                            *o += gi;
                        } else if *xi < 0.0 {
                            *o -= gi;
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = values[p.0].cols();
                    if let Some(gp) = slot(grads, requires, values, p) {
                        for r in 0..g.rows() {
                            tensor::axpy(1.0, &g.row(r)[off..off + w], gp.row_mut(r));
                        }
                    }
                    off += w;
                }
            }
            Op::RowBlock(x, start) => {
                if let Some(gx) = slot(grads, requires, values, *x) {
                    let d = g.cols();
                    let dst = &mut gx.data_mut()[start * d..start * d + g.len()];
                    tensor::axpy(1.0, g.data(), dst);
                }
            }
            Op::Transpose(x) => {
                if let Some(gx) = slot(grads, requires, values, *x) {
                    gx.add_assign(&g.transpose());
                }
            }
            Op::ReduceRows(x, mode, argmax) => {
                let m = values[x.0].rows();
                if let Some(gx) = slot(grads, requires, values, *x) {
                    match mode {
                        Reduce::Max => {
                            for (j, &r) in argmax.iter().enumerate() {
                                let c = gx.cols();
                                gx.data_mut()[r * c + j] += g.data()[j];
                            }
                        }
                        Reduce::Mean => {
                            let inv = 1.0 / m as f64;
                            for r in 0..m {
                                tensor::axpy(inv, g.data(), gx.row_mut(r));
                            }
                        }
                    }
                }
            }
            Op::SumAll(x) => {
                let gi = g.item();
                if let Some(gx) = slot(grads, requires, values, *x) {
                    gx.data_mut().iter_mut().for_each(|o| *o += gi);
                }
            }
            Op::RowSoftmax(x) => {
                if let Some(gx) = slot(grads, requires, values, *x) {
                    for r in 0..g.rows() {
                        let y = out.row(r);
                        let gr = g.row(r);
                        let s = tensor::dot(gr, y);
                        for ((o, yi), gi) in gx.row_mut(r).iter_mut().zip(y).zip(gr) {
                            *o += yi * (gi - s);
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                rows,
                labels,
                probs,
            } => {
                let scale = g.item() / rows.len() as f64;
                if let Some(gl) = slot(grads, requires, values, *logits) {
                    for (k, (&r, &y)) in rows.iter().zip(labels).enumerate() {
                        let grow = gl.row_mut(r);
                        tensor::axpy(scale, probs.row(k), grow);
                        grow[y] -= scale;
                    }
                }
            }
            Op::GatherRows(x, idx) => {
                if let Some(gx) = slot(grads, requires, values, *x) {
                    for (e, &r) in idx.iter().enumerate() {
                        tensor::axpy(1.0, g.row(e), gx.row_mut(r));
                    }
                }
            }
            Op::GatherDiff(x, csr) => {
                if let Some(gx) = slot(grads, requires, values, *x) {
                    for v in 0..csr.segments() {
                        for e in csr.range(v) {
                            let u = csr.indices()[e];
                            tensor::axpy(1.0, g.row(e), gx.row_mut(u));
                            tensor::axpy(-1.0, g.row(e), gx.row_mut(v));
                        }
                    }
                }
            }
            Op::SegmentMax(x, _csr, argmax) => {
                if let Some(gx) = slot(grads, requires, values, *x) {
                    let d = g.cols();
                    for (k, &e) in argmax.iter().enumerate() {
                        if e != usize::MAX {
                            let j = k % d;
                            gx.data_mut()[e * d + j] += g.data()[k];
                        }
                    }
                }
            }
            Op::SegmentMean(x, csr) => {
                if let Some(gx) = slot(grads, requires, values, *x) {
                    for v in 0..csr.segments() {
                        let range = csr.range(v);
                        if range.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / range.len() as f64;
                        for e in range {
                            tensor::axpy(inv, g.row(v), gx.row_mut(e));
                        }
                    }
                }
            }
            Op::CsrMean(x, csr) => {
                if let Some(gx) = slot(grads, requires, values, *x) {
                    for v in 0..csr.segments() {
                        let seg = csr.segment(v);
                        if seg.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / seg.len() as f64;
                        for &u in seg {
                            tensor::axpy(inv, g.row(v), gx.row_mut(u));
                        }
                    }
                }
            }
            Op::EdgeCosine(ga_var, base_var, csr) => {
                let (gv, bv) = (&values[ga_var.0], &values[base_var.0]);
                let mut d_edges = requires[ga_var.0].then(|| Tensor::zeros(gv.rows(), gv.cols()));
                let mut d_base = requires[base_var.0].then(|| Tensor::zeros(bv.rows(), bv.cols()));
                for v in 0..csr.segments() {
                    let b = bv.row(v);
                    let nb = tensor::norm(b);
                    if nb < COSINE_EPS {
                        continue;
                    }
                    for e in csr.range(v) {
                        let a = gv.row(e);
                        let na = tensor::norm(a);
                        let up = g.data()[e];
                        if na < COSINE_EPS || up == 0.0 {
                            continue;
                        }
                        let cos = out.data()[e];
                        let inv = 1.0 / (na * nb);
                        if let Some(de) = d_edges.as_mut() {
                            let row = de.row_mut(e);
                            for ((o, ai), bi) in row.iter_mut().zip(a).zip(b) {
                                *o += up * (bi * inv - cos * ai / (na * na));
                            }
                        }
                        if let Some(db) = d_base.as_mut() {
                            let row = db.row_mut(v);
                            for ((o, ai), bi) in row.iter_mut().zip(a).zip(b) {
                                *o += up * (ai * inv - cos * bi / (nb * nb));
                            }
                        }
                    }
                }
                if let (Some(de), Some(acc)) = (d_edges, slot(grads, requires, values, *ga_var)) {
                    acc.add_assign(&de);
                }
                if let (Some(db), Some(acc)) = (d_base, slot(grads, requires, values, *base_var)) {
                    acc.add_assign(&db);
                }
            }
            Op::SegmentMaxActDiff(x, csr, act, argmax) => {
                let xv = &values[x.0];
                if let Some(gx) = slot(grads, requires, values, *x) {
                    let d = xv.cols();
                    for v in 0..csr.segments() {
                        for j in 0..d {
                            let e = argmax[v * d + j];
                            if e == usize::MAX {
                                continue;
                            }
                            let u = csr.indices()[e];
                            let s = g.get(v, j) * act.derivative(xv.get(u, j) - xv.get(v, j));
                            gx.row_mut(u)[j] += s;
                            gx.row_mut(v)[j] -= s;
                        }
                    }
                }
            }
            Op::EdgeCosineDiff(x_var, base_var, csr) => {
                let (xv, bv) = (&values[x_var.0], &values[base_var.0]);
                let mut dx = requires[x_var.0].then(|| Tensor::zeros(xv.rows(), xv.cols()));
                let mut d_base = requires[base_var.0].then(|| Tensor::zeros(bv.rows(), bv.cols()));
                let mut a = vec![0.0; xv.cols()];
                let mut step = vec![0.0; xv.cols()];
                for v in 0..csr.segments() {
                    let b = bv.row(v);
                    let nb = tensor::norm(b);
                    if nb < COSINE_EPS {
                        continue;
                    }
                    for e in csr.range(v) {
                        let up = g.data()[e];
                        if up == 0.0 {
                            continue;
                        }
                        let u = csr.indices()[e];
                        super::fused::diff_into(xv, u, v, &mut a);
                        let na = tensor::norm(&a);
                        if na < COSINE_EPS {
                            continue;
                        }
                        let cos = out.data()[e];
                        let inv = 1.0 / (na * nb);
                        if let Some(dx) = dx.as_mut() {
                            for ((o, ai), bi) in step.iter_mut().zip(&a).zip(b) {
                                *o = up * (bi * inv - cos * ai / (na * na));
                            }
                            tensor::axpy(1.0, &step, dx.row_mut(u));
                            tensor::axpy(-1.0, &step, dx.row_mut(v));
                        }
                        if let Some(db) = d_base.as_mut() {
                            let row = db.row_mut(v);
                            for ((o, ai), bi) in row.iter_mut().zip(&a).zip(b) {
                                *o += up * (ai * inv - cos * bi / (nb * nb));
                            }
                        }
                    }
                }
                if let (Some(dx), Some(acc)) = (dx, slot(grads, requires, values, *x_var)) {
                    acc.add_assign(&dx);
                }
                if let (Some(db), Some(acc)) = (d_base, slot(grads, requires, values, *base_var)) {
                    acc.add_assign(&db);
                }
            }
            Op::SegmentMeanAbsDiff(x, csr) => {
                let xv = &values[x.0];
                if let Some(gx) = slot(grads, requires, values, *x) {
                    let d = xv.cols();
                    for v in 0..csr.segments() {
                        let range = csr.range(v);
                        if range.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / range.len() as f64;
                        for e in range {
                            let u = csr.indices()[e];
                            for j in 0..d {
                                let diff = xv.get(u, j) - xv.get(v, j);
                                if diff == 0.0 {
                                    continue;
                                }
                                let s = g.get(v, j) * inv * diff.signum();
                                gx.row_mut(u)[j] += s;
                                gx.row_mut(v)[j] -= s;
                            }
                        }
                    }
                }
            }
            Op::AbsDiffMatmul(x_var, w_var, csr) => {
                let (xv, wv) = (&values[x_var.0], &values[w_var.0]);
                let mut dx = requires[x_var.0].then(|| Tensor::zeros(xv.rows(), xv.cols()));
                let mut dw = requires[w_var.0].then(|| Tensor::zeros(wv.rows(), wv.cols()));
                let mut a = vec![0.0; xv.cols()];
                for v in 0..csr.segments() {
                    for e in csr.range(v) {
                        let ge = g.row(e);
                        let u = csr.indices()[e];
                        super::fused::diff_into(xv, u, v, &mut a);
                        for (j, &dj) in a.iter().enumerate() {
                            if dj == 0.0 {
                                continue;
                            }
                            if let Some(dw) = dw.as_mut() {
                                tensor::axpy(dj.abs(), ge, dw.row_mut(j));
                            }
                            if let Some(dx) = dx.as_mut() {
                                let s = tensor::dot(ge, wv.row(j)) * dj.signum();
                                dx.row_mut(u)[j] += s;
                                dx.row_mut(v)[j] -= s;
                            }
                        }
                    }
                }
                if let (Some(dx), Some(acc)) = (dx, slot(grads, requires, values, *x_var)) {
                    acc.add_assign(&dx);
                }
                if let (Some(dw), Some(acc)) = (dw, slot(grads, requires, values, *w_var)) {
                    acc.add_assign(&dw);
                }
            }
            Op::MaskMul(x, mask) => {
                if let Some(gx) = slot(grads, requires, values, *x) {
                    for ((o, gi), mi) in gx.data_mut().iter_mut().zip(g.data()).zip(mask.data()) {
                        *o += gi * mi;
                    }
                }
            }
        }
    }
}
