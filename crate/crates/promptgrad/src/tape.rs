//! Reverse-mode differentiation over recorded tensor operations.
//!
//! A [`GradTape`] records every primitive applied during a forward pass and
//! replays them in exact reverse order to push the loss gradient back to the
//! registered leaves. Only leaves accumulate externally visible gradients;
//! everything else on the tape (frozen weights entered as constants,
//! intermediates) receives nothing. That asymmetry is the whole point: it is
//! how "only the prompt matrix is trainable" becomes a structural guarantee
//! instead of a convention.
//!
//! Also home to [`finite_diff_grad`], the central-difference oracle that
//! every gradient path in this crate is checked against.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    cross_entropy, layer_norm, matmul, matmul_nt, matmul_tn, softmax_rows, softmax_slice, Tensor2,
};

static TAPE_COUNTER: AtomicU64 = AtomicU64::new(1);

const GELU_COEF: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Handle to a tensor recorded on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId {
    tape: u64,
    index: usize,
}

#[derive(Debug, Clone)]
enum Op<T> {
    MatMul { a: usize, b: usize, out: usize },
    /// `out = a @ b^T`
    MatMulNT { a: usize, b: usize, out: usize },
    Add { a: usize, b: usize, out: usize },
    /// Broadcasts a 1-row tensor over every row of `a`.
    AddRow { a: usize, row: usize, out: usize },
    Scale { a: usize, c: T, out: usize },
    LayerNorm { x: usize, gain: usize, bias: usize, eps: T, out: usize },
    /// `tanh_inner` is saved at forward time for the backward pass.
    Gelu { x: usize, tanh_inner: Tensor2<T>, out: usize },
    SoftmaxRows { x: usize, out: usize },
    /// Row t is a softmax over columns `0..=t`; later columns are zero.
    CausalSoftmax { x: usize, out: usize },
    SliceRows { x: usize, start: usize, out: usize },
    SliceCols { x: usize, start: usize, out: usize },
    ConcatRows { parts: Vec<usize>, out: usize },
    ConcatCols { parts: Vec<usize>, out: usize },
    /// Gathers `ids` rows from a table; backward scatter-adds.
    EmbedRows { table: usize, ids: Vec<usize>, out: usize },
    SumAll { x: usize, out: usize },
    /// Fused softmax + summed cross-entropy; `probs` saved for backward.
    CrossEntropy { logits: usize, targets: Vec<usize>, probs: Tensor2<T>, out: usize },
}

fn out_index<T>(op: &Op<T>) -> usize {
    match op {
        Op::MatMul { out, .. }
        | Op::MatMulNT { out, .. }
        | Op::Add { out, .. }
        | Op::AddRow { out, .. }
        | Op::Scale { out, .. }
        | Op::LayerNorm { out, .. }
        | Op::Gelu { out, .. }
        | Op::SoftmaxRows { out, .. }
        | Op::CausalSoftmax { out, .. }
        | Op::SliceRows { out, .. }
        | Op::SliceCols { out, .. }
        | Op::ConcatRows { out, .. }
        | Op::ConcatCols { out, .. }
        | Op::EmbedRows { out, .. }
        | Op::SumAll { out, .. }
        | Op::CrossEntropy { out, .. } => *out,
    }
}

/// Gradients for the leaves registered on a tape, in registration order.
pub struct LeafGradients<T> {
    entries: Vec<(ValueId, Tensor2<T>)>,
}

impl<T: Scalar> LeafGradients<T> {
    pub fn get(&self, leaf: ValueId) -> Option<&Tensor2<T>> {
        self.entries.iter().find(|(id, _)| *id == leaf).map(|(_, g)| g)
    }

    /// Leaves in the order they were registered.
    pub fn iter(&self) -> impl Iterator<Item = (ValueId, &Tensor2<T>)> {
        self.entries.iter().map(|(id, g)| (*id, g))
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, g)| g.all_finite())
    }
}

/// Records primitive tensor operations for later reverse-mode replay.
pub struct GradTape<T> {
    id: u64,
    values: Vec<Tensor2<T>>,
    /// Whether a gradient must flow to this node (leaves, and anything
    /// computed from one). Backward skips everything else.
    requires: Vec<bool>,
    ops: Vec<Op<T>>,
    leaves: Vec<usize>,
}

impl<T: Scalar> Default for GradTape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GradTape<T> {
    pub fn new() -> Self {
        GradTape {
            id: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed),
            values: Vec::new(),
            requires: Vec::new(),
            ops: Vec::new(),
            leaves: Vec::new(),
        }
    }

    /// Registers a trainable leaf. Its gradient is reported by [`Self::backward`].
    pub fn leaf(&mut self, value: Tensor2<T>) -> ValueId {
        let id = self.push(value, true);
        self.leaves.push(id.index);
        id
    }

    /// Registers a non-trainable input. It never receives a gradient.
    pub fn constant(&mut self, value: Tensor2<T>) -> ValueId {
        self.push(value, false)
    }

    pub fn value(&self, id: ValueId) -> Result<&Tensor2<T>> {
        self.check(id)?;
        Ok(&self.values[id.index])
    }

    fn push(&mut self, value: Tensor2<T>, requires: bool) -> ValueId {
        let index = self.values.len();
        self.values.push(value);
        self.requires.push(requires);
        ValueId { tape: self.id, index }
    }

    fn check(&self, id: ValueId) -> Result<()> {
        if id.tape != self.id || id.index >= self.values.len() {
            return Err(Error::Usage(
                "value does not belong to this tape".to_string(),
            ));
        }
        Ok(())
    }

    fn record(
        &mut self,
        value: Tensor2<T>,
        inputs: &[ValueId],
        op: impl FnOnce(usize) -> Op<T>,
    ) -> ValueId {
        let requires = inputs.iter().any(|i| self.requires[i.index]);
        let id = self.push(value, requires);
        self.ops.push(op(id.index));
        id
    }

    // ── Recorded primitives ──────────────────────────────────────────

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check(a)?;
        self.check(b)?;
        let out = matmul(&self.values[a.index], &self.values[b.index])?;
        Ok(self.record(out, &[a, b], |out| Op::MatMul { a: a.index, b: b.index, out }))
    }

    /// `a @ b^T`
    pub fn matmul_nt(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check(a)?;
        self.check(b)?;
        let out = matmul_nt(&self.values[a.index], &self.values[b.index])?;
        Ok(self.record(out, &[a, b], |out| Op::MatMulNT { a: a.index, b: b.index, out }))
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check(a)?;
        self.check(b)?;
        let out = self.values[a.index].add(&self.values[b.index])?;
        Ok(self.record(out, &[a, b], |out| Op::Add { a: a.index, b: b.index, out }))
    }

    /// Adds a 1-row tensor to every row of `a` (bias broadcast).
    pub fn add_row(&mut self, a: ValueId, row: ValueId) -> Result<ValueId> {
        self.check(a)?;
        self.check(row)?;
        let (av, rv) = (&self.values[a.index], &self.values[row.index]);
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::Shape {
                op: "add_row",
                lhs_rows: av.rows(),
                lhs_cols: av.cols(),
                rhs_rows: rv.rows(),
                rhs_cols: rv.cols(),
            });
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            let bias = rv.row(0).to_vec();
            let orow = out.row_mut(r);
            for c in 0..bias.len() {
                orow[c] = orow[c] + bias[c];
            }
        }
        Ok(self.record(out, &[a, row], |out| Op::AddRow { a: a.index, row: row.index, out }))
    }

    pub fn scale(&mut self, a: ValueId, c: T) -> Result<ValueId> {
        self.check(a)?;
        let out = self.values[a.index].scale(c);
        Ok(self.record(out, &[a], |out| Op::Scale { a: a.index, c, out }))
    }

    pub fn layer_norm(&mut self, x: ValueId, gain: ValueId, bias: ValueId, eps: T) -> Result<ValueId> {
        self.check(x)?;
        self.check(gain)?;
        self.check(bias)?;
        let out = layer_norm(
            &self.values[x.index],
            &self.values[gain.index],
            &self.values[bias.index],
            eps,
        )?;
        Ok(self.record(out, &[x, gain, bias], |out| Op::LayerNorm {
            x: x.index,
            gain: gain.index,
            bias: bias.index,
            eps,
            out,
        }))
    }

    pub fn gelu(&mut self, x: ValueId) -> Result<ValueId> {
        self.check(x)?;
        let xv = &self.values[x.index];
        let mut tanh_inner = xv.clone();
        for v in tanh_inner.data_mut() {
            *v = gelu_inner(*v).tanh();
        }
        let half = T::from_f64(0.5);
        let out = Tensor2::from_fn(xv.rows(), xv.cols(), |r, c| {
            half * xv.at(r, c) * (T::one() + tanh_inner.at(r, c))
        });
        Ok(self.record(out, &[x], |out| Op::Gelu { x: x.index, tanh_inner, out }))
    }

    pub fn softmax_rows(&mut self, x: ValueId) -> Result<ValueId> {
        self.check(x)?;
        let out = softmax_rows(&self.values[x.index]);
        Ok(self.record(out, &[x], |out| Op::SoftmaxRows { x: x.index, out }))
    }

    /// Masked softmax for causal attention scores: row t normalizes over
    /// columns `0..=t` and zeroes the rest.
    pub fn causal_softmax(&mut self, x: ValueId) -> Result<ValueId> {
        self.check(x)?;
        let xv = &self.values[x.index];
        let mut out = Tensor2::zeros(xv.rows(), xv.cols());
        for r in 0..xv.rows() {
            let valid = (r + 1).min(xv.cols());
            let mut prefix = xv.row(r)[..valid].to_vec();
            softmax_slice(&mut prefix);
            out.row_mut(r)[..valid].copy_from_slice(&prefix);
        }
        Ok(self.record(out, &[x], |out| Op::CausalSoftmax { x: x.index, out }))
    }

    pub fn slice_rows(&mut self, x: ValueId, start: usize, len: usize) -> Result<ValueId> {
        self.check(x)?;
        let out = self.values[x.index].slice_rows(start, len)?;
        Ok(self.record(out, &[x], |out| Op::SliceRows { x: x.index, start, out }))
    }

    pub fn slice_cols(&mut self, x: ValueId, start: usize, len: usize) -> Result<ValueId> {
        self.check(x)?;
        let xv = &self.values[x.index];
        if start + len > xv.cols() {
            return Err(Error::Index {
                index: start + len,
                limit: xv.cols(),
            });
        }
        let out = Tensor2::from_fn(xv.rows(), len, |r, c| xv.at(r, start + c));
        Ok(self.record(out, &[x], |out| Op::SliceCols { x: x.index, start, out }))
    }

    pub fn concat_rows(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        for p in parts {
            self.check(*p)?;
        }
        let tensors: Vec<&Tensor2<T>> = parts.iter().map(|p| &self.values[p.index]).collect();
        let out = Tensor2::concat_rows(&tensors)?;
        let indices: Vec<usize> = parts.iter().map(|p| p.index).collect();
        Ok(self.record(out, parts, |out| Op::ConcatRows { parts: indices, out }))
    }

    pub fn concat_cols(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        for p in parts {
            self.check(*p)?;
        }
        let rows = self.values[parts[0].index].rows();
        let mut cols = 0;
        for p in parts {
            let t = &self.values[p.index];
            if t.rows() != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs_rows: rows,
                    lhs_cols: cols,
                    rhs_rows: t.rows(),
                    rhs_cols: t.cols(),
                });
            }
            cols += t.cols();
        }
        let mut out = Tensor2::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let t = &self.values[p.index];
            for r in 0..rows {
                let src = t.row(r).to_vec();
                out.row_mut(r)[offset..offset + src.len()].copy_from_slice(&src);
            }
            offset += t.cols();
        }
        let indices: Vec<usize> = parts.iter().map(|p| p.index).collect();
        Ok(self.record(out, parts, |out| Op::ConcatCols { parts: indices, out }))
    }

    /// Gathers rows of `table` at `ids`. Backward scatter-adds, so repeated
    /// ids accumulate into the same table row.
    pub fn embed_rows(&mut self, table: ValueId, ids: &[usize]) -> Result<ValueId> {
        self.check(table)?;
        let tv = &self.values[table.index];
        for &i in ids {
            if i >= tv.rows() {
                return Err(Error::Index {
                    index: i,
                    limit: tv.rows(),
                });
            }
        }
        let mut out = Tensor2::zeros(ids.len(), tv.cols());
        for (r, &i) in ids.iter().enumerate() {
            let src = tv.row(i).to_vec();
            out.row_mut(r).copy_from_slice(&src);
        }
        let ids = ids.to_vec();
        Ok(self.record(out, &[table], |out| Op::EmbedRows { table: table.index, ids, out }))
    }

    /// Sums every element into a 1x1 scalar node.
    pub fn sum_all(&mut self, x: ValueId) -> Result<ValueId> {
        self.check(x)?;
        let mut acc = T::zero();
        for &v in self.values[x.index].data() {
            acc = acc + v;
        }
        let out = Tensor2::from_vec(1, 1, vec![acc]).expect("1x1");
        Ok(self.record(out, &[x], |out| Op::SumAll { x: x.index, out }))
    }

    /// Fused softmax + cross-entropy summed over positions: one logit row
    /// per target. Produces a 1x1 scalar node.
    pub fn cross_entropy(&mut self, logits: ValueId, targets: &[usize]) -> Result<ValueId> {
        self.check(logits)?;
        let lv = &self.values[logits.index];
        let loss = cross_entropy(lv, targets)?;
        let probs = softmax_rows(lv);
        let out = Tensor2::from_vec(1, 1, vec![loss]).expect("1x1");
        let targets = targets.to_vec();
        Ok(self.record(out, &[logits], |out| Op::CrossEntropy {
            logits: logits.index,
            targets,
            probs,
            out,
        }))
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Replays the tape in reverse from `loss` (a 1x1 node produced on this
    /// tape) and returns gradients for every registered leaf. Leaves the
    /// loss never depended on get zero gradients of the right shape.
    pub fn backward(&self, loss: ValueId) -> Result<LeafGradients<T>> {
        self.check(loss).map_err(|_| {
            Error::Usage("backward: loss was not produced on this tape".to_string())
        })?;
        if self.values[loss.index].shape() != (1, 1) {
            return Err(Error::Usage(format!(
                "backward: loss must be a 1x1 scalar node, got {}x{}",
                self.values[loss.index].rows(),
                self.values[loss.index].cols()
            )));
        }

        let mut grads: Vec<Option<Tensor2<T>>> = vec![None; self.values.len()];
        grads[loss.index] = Some(Tensor2::from_vec(1, 1, vec![T::one()]).expect("1x1"));

        for op in self.ops.iter().rev() {
            let out = out_index(op);
            let d_out = match grads[out].clone() {
                Some(g) => g,
                None => continue,
            };
            self.backward_op(op, &d_out, &mut grads)?;
        }

        let entries = self
            .leaves
            .iter()
            .map(|&index| {
                let grad = grads[index].take().unwrap_or_else(|| {
                    let v = &self.values[index];
                    Tensor2::zeros(v.rows(), v.cols())
                });
                (ValueId { tape: self.id, index }, grad)
            })
            .collect();
        Ok(LeafGradients { entries })
    }

    fn backward_op(
        &self,
        op: &Op<T>,
        d_out: &Tensor2<T>,
        grads: &mut [Option<Tensor2<T>>],
    ) -> Result<()> {
        match op {
            Op::MatMul { a, b, .. } => {
                if self.requires[*a] {
                    accumulate(grads, *a, matmul_nt(d_out, &self.values[*b])?);
                }
                if self.requires[*b] {
                    accumulate(grads, *b, matmul_tn(&self.values[*a], d_out)?);
                }
            }
            Op::MatMulNT { a, b, .. } => {
                if self.requires[*a] {
                    accumulate(grads, *a, matmul(d_out, &self.values[*b])?);
                }
                if self.requires[*b] {
                    accumulate(grads, *b, matmul_tn(d_out, &self.values[*a])?);
                }
            }
            Op::Add { a, b, .. } => {
                if self.requires[*a] {
                    accumulate(grads, *a, d_out.clone());
                }
                if self.requires[*b] {
                    accumulate(grads, *b, d_out.clone());
                }
            }
            Op::AddRow { a, row, .. } => {
                if self.requires[*a] {
                    accumulate(grads, *a, d_out.clone());
                }
                if self.requires[*row] {
                    let mut d_row = Tensor2::zeros(1, d_out.cols());
                    for r in 0..d_out.rows() {
                        for c in 0..d_out.cols() {
                            let v = d_row.at(0, c) + d_out.at(r, c);
                            d_row.set(0, c, v);
                        }
                    }
                    accumulate(grads, *row, d_row);
                }
            }
            Op::Scale { a, c, .. } => {
                if self.requires[*a] {
                    accumulate(grads, *a, d_out.scale(*c));
                }
            }
            Op::LayerNorm { x, gain, bias, eps, .. } => {
                let (d_x, d_gain, d_bias) =
                    layer_norm_backward(&self.values[*x], &self.values[*gain], d_out, *eps);
                if self.requires[*x] {
                    accumulate(grads, *x, d_x);
                }
                if self.requires[*gain] {
                    accumulate(grads, *gain, d_gain);
                }
                if self.requires[*bias] {
                    accumulate(grads, *bias, d_bias);
                }
            }
            Op::Gelu { x, tanh_inner, .. } => {
                if self.requires[*x] {
                    let xv = &self.values[*x];
                    let d_x = Tensor2::from_fn(xv.rows(), xv.cols(), |r, c| {
                        gelu_grad_scalar(xv.at(r, c), tanh_inner.at(r, c)) * d_out.at(r, c)
                    });
                    accumulate(grads, *x, d_x);
                }
            }
            Op::SoftmaxRows { x, out } | Op::CausalSoftmax { x, out } => {
                if !self.requires[*x] {
                    return Ok(());
                }
                let y = &self.values[*out];
                let mut d_x = Tensor2::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let dr = d_out.row(r);
                    let mut dot = T::zero();
                    for c in 0..yr.len() {
                        dot = dot + dr[c] * yr[c];
                    }
                    let drow = d_x.row_mut(r);
                    for c in 0..yr.len() {
                        drow[c] = yr[c] * (dr[c] - dot);
                    }
                }
                accumulate(grads, *x, d_x);
            }
            Op::SliceRows { x, start, .. } => {
                if !self.requires[*x] {
                    return Ok(());
                }
                let xv = &self.values[*x];
                let mut d_x = Tensor2::zeros(xv.rows(), xv.cols());
                for r in 0..d_out.rows() {
                    let src = d_out.row(r).to_vec();
                    d_x.row_mut(start + r).copy_from_slice(&src);
                }
                accumulate(grads, *x, d_x);
            }
            Op::SliceCols { x, start, .. } => {
                if !self.requires[*x] {
                    return Ok(());
                }
                let xv = &self.values[*x];
                let mut d_x = Tensor2::zeros(xv.rows(), xv.cols());
                for r in 0..d_out.rows() {
                    for c in 0..d_out.cols() {
                        d_x.set(r, start + c, d_out.at(r, c));
                    }
                }
                accumulate(grads, *x, d_x);
            }
            Op::ConcatRows { parts, .. } => {
                let mut offset = 0;
                for &p in parts {
                    let rows = self.values[p].rows();
                    if self.requires[p] {
                        accumulate(grads, p, d_out.slice_rows(offset, rows)?);
                    }
                    offset += rows;
                }
            }
            Op::ConcatCols { parts, .. } => {
                let mut offset = 0;
                for &p in parts {
                    let pv = &self.values[p];
                    if self.requires[p] {
                        let d_p = Tensor2::from_fn(pv.rows(), pv.cols(), |r, c| {
                            d_out.at(r, offset + c)
                        });
                        accumulate(grads, p, d_p);
                    }
                    offset += pv.cols();
                }
            }
            Op::EmbedRows { table, ids, .. } => {
                if !self.requires[*table] {
                    return Ok(());
                }
                let tv = &self.values[*table];
                let mut d_t = Tensor2::zeros(tv.rows(), tv.cols());
                for (r, &i) in ids.iter().enumerate() {
                    for c in 0..d_out.cols() {
                        let v = d_t.at(i, c) + d_out.at(r, c);
                        d_t.set(i, c, v);
                    }
                }
                accumulate(grads, *table, d_t);
            }
            Op::SumAll { x, .. } => {
                if !self.requires[*x] {
                    return Ok(());
                }
                let xv = &self.values[*x];
                let g = d_out.at(0, 0);
                accumulate(grads, *x, Tensor2::from_fn(xv.rows(), xv.cols(), |_, _| g));
            }
            Op::CrossEntropy { logits, targets, probs, .. } => {
                if !self.requires[*logits] {
                    return Ok(());
                }
                let g = d_out.at(0, 0);
                let mut d_l = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    let v = d_l.at(r, t) - T::one();
                    d_l.set(r, t, v);
                }
                accumulate(grads, *logits, d_l.scale(g));
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor2<T>>], index: usize, delta: Tensor2<T>) {
    match &mut grads[index] {
        Some(existing) => {
            let data = existing.data_mut();
            for (e, d) in data.iter_mut().zip(delta.data()) {
                *e += *d;
            }
        }
        None => grads[index] = Some(delta),
    }
}

fn gelu_inner<T: Scalar>(x: T) -> T {
    let coef = T::from_f64(GELU_COEF);
    let k = T::from_f64(SQRT_2_OVER_PI);
    k * (x + coef * x * x * x)
}

fn gelu_grad_scalar<T: Scalar>(x: T, t: T) -> T {
    let half = T::from_f64(0.5);
    let coef = T::from_f64(GELU_COEF);
    let three = T::from_f64(3.0);
    let k = T::from_f64(SQRT_2_OVER_PI);
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * k * (T::one() + three * coef * x * x)
}

fn layer_norm_backward<T: Scalar>(
    x: &Tensor2<T>,
    gain: &Tensor2<T>,
    d_out: &Tensor2<T>,
    eps: T,
) -> (Tensor2<T>, Tensor2<T>, Tensor2<T>) {
    let n = T::from_f64(x.cols() as f64);
    let mut d_x = Tensor2::zeros(x.rows(), x.cols());
    let mut d_gain = Tensor2::zeros(1, x.cols());
    let mut d_bias = Tensor2::zeros(1, x.cols());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mut mean = T::zero();
        for &v in row {
            mean = mean + v;
        }
        mean = mean / n;
        let mut var = T::zero();
        for &v in row {
            let d = v - mean;
            var = var + d * d;
        }
        var = var / n;
        let inv_std = (var + eps).sqrt().recip();

        // d_hat = d_out * gain; dx = inv_std * (d_hat - mean(d_hat) - hat * mean(d_hat*hat))
        let dr = d_out.row(r);
        let mut mean_dhat = T::zero();
        let mut mean_dhat_hat = T::zero();
        for c in 0..row.len() {
            let hat = (row[c] - mean) * inv_std;
            let dhat = dr[c] * gain.at(0, c);
            mean_dhat = mean_dhat + dhat;
            mean_dhat_hat = mean_dhat_hat + dhat * hat;
            d_gain.set(0, c, d_gain.at(0, c) + dr[c] * hat);
            d_bias.set(0, c, d_bias.at(0, c) + dr[c]);
        }
        mean_dhat = mean_dhat / n;
        mean_dhat_hat = mean_dhat_hat / n;
        let drow = d_x.row_mut(r);
        for c in 0..row.len() {
            let hat = (row[c] - mean) * inv_std;
            let dhat = dr[c] * gain.at(0, c);
            drow[c] = inv_std * (dhat - mean_dhat - hat * mean_dhat_hat);
        }
    }
    (d_x, d_gain, d_bias)
}

// ── Finite-difference oracle ─────────────────────────────────────────

/// Central-difference gradient of a scalar function of one tensor:
/// `(f(x + h·e) − f(x − h·e)) / 2h` elementwise. `f` must be deterministic.
pub fn finite_diff_grad<T: Scalar>(
    mut f: impl FnMut(&Tensor2<T>) -> T,
    x: &Tensor2<T>,
    h: T,
) -> Tensor2<T> {
    debug_assert!(h > T::zero());
    let mut grad = Tensor2::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let orig = probe.at(r, c);
            probe.set(r, c, orig + h);
            let plus = f(&probe);
            probe.set(r, c, orig - h);
            let minus = f(&probe);
            probe.set(r, c, orig);
            grad.set(r, c, (plus - minus) / (h + h));
        }
    }
    grad
}

/// Largest elementwise relative error between two gradients, with a small
/// floor in the denominator so exact zeros compare cleanly.
pub fn max_relative_error<T: Scalar>(a: &Tensor2<T>, b: &Tensor2<T>) -> T {
    let floor = T::from_f64(1e-8);
    let mut worst = T::zero();
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let denom = (x.abs() + y.abs()).max(floor);
        let rel = (x - y).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    worst
}
