//! Dense 2-D tensors and the deterministic kernels built on them.
//!
//! All reductions run in a fixed index order, so identical inputs produce
//! bit-identical outputs across runs. No parallelism, no blocking, no
//! fused-multiply-add surprises: these kernels are the reproducibility
//! anchor for everything above them.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix of scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor2<T> {
    /// Zero-filled tensor.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds a tensor from row-major data. The length must match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Param(format!(
                "data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Tensor2 { rows, cols, data })
    }

    /// Builds a tensor by evaluating `f(row, col)` at every position.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor2 { rows, cols, data }
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copies the rows `start..start + len` into a new tensor.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.rows {
            return Err(Error::Index {
                index: start + len,
                limit: self.rows,
            });
        }
        Ok(Tensor2 {
            rows: len,
            cols: self.cols,
            data: self.data[start * self.cols..(start + len) * self.cols].to_vec(),
        })
    }

    /// Stacks tensors vertically. All parts must share the column count.
    pub fn concat_rows(parts: &[&Tensor2<T>]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::Shape {
                    op: "concat_rows",
                    lhs_rows: rows,
                    lhs_cols: cols,
                    rhs_rows: p.rows,
                    rhs_cols: p.cols,
                });
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor2 { rows, cols, data })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.at(c, r))
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(self.shape_err("add", other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Elementwise difference; shapes must match.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(self.shape_err("sub", other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Scales every element by `c`.
    pub fn scale(&self, c: T) -> Self {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * c).collect(),
        }
    }

    /// True when every element is finite (no NaN/Inf).
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference, for tests and gradient checks.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), |m, d| if d > m { d } else { m })
    }

    fn shape_err(&self, op: &'static str, other: &Self) -> Error {
        Error::Shape {
            op,
            lhs_rows: self.rows,
            lhs_cols: self.cols,
            rhs_rows: other.rows,
            rhs_cols: other.cols,
        }
    }
}

// ── Kernels ──────────────────────────────────────────────────────────

/// Matrix product `a @ b` with ascending-k accumulation per output cell.
pub fn matmul<T: Scalar>(a: &Tensor2<T>, b: &Tensor2<T>) -> Result<Tensor2<T>> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            lhs_rows: a.rows,
            lhs_cols: a.cols,
            rhs_rows: b.rows,
            rhs_cols: b.cols,
        });
    }
    let mut out = Tensor2::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.at(i, k);
            let brow = b.row(k);
            let orow = out.row_mut(i);
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    Ok(out)
}

/// `a @ b^T` without materializing the transpose.
pub fn matmul_nt<T: Scalar>(a: &Tensor2<T>, b: &Tensor2<T>) -> Result<Tensor2<T>> {
    if a.cols != b.cols {
        return Err(Error::Shape {
            op: "matmul_nt",
            lhs_rows: a.rows,
            lhs_cols: a.cols,
            rhs_rows: b.rows,
            rhs_cols: b.cols,
        });
    }
    let mut out = Tensor2::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            out.set(i, j, dot(arow, b.row(j)));
        }
    }
    Ok(out)
}

/// Dot product with four fixed-order partial sums (deterministic and wide
/// enough to vectorize).
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] = acc[0] + a[i] * b[i];
        acc[1] = acc[1] + a[i + 1] * b[i + 1];
        acc[2] = acc[2] + a[i + 2] * b[i + 2];
        acc[3] = acc[3] + a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail = tail + a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

/// `a^T @ b` without materializing the transpose.
pub fn matmul_tn<T: Scalar>(a: &Tensor2<T>, b: &Tensor2<T>) -> Result<Tensor2<T>> {
    if a.rows != b.rows {
        return Err(Error::Shape {
            op: "matmul_tn",
            lhs_rows: a.rows,
            lhs_cols: a.cols,
            rhs_rows: b.rows,
            rhs_cols: b.cols,
        });
    }
    let mut out = Tensor2::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let arow = a.row(k);
        let brow = b.row(k);
        for (i, &aki) in arow.iter().enumerate() {
            let orow = out.row_mut(i);
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aki * bv;
            }
        }
    }
    Ok(out)
}

/// Stable in-place softmax of a slice: shifts by the max, then normalizes.
pub(crate) fn softmax_slice<T: Scalar>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows<T: Scalar>(x: &Tensor2<T>) -> Tensor2<T> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_slice(out.row_mut(r));
    }
    out
}

/// Per-row layer normalization followed by the `gain`/`bias` affine map.
///
/// `gain` and `bias` are 1-row tensors broadcast over the rows of `x`.
/// Uses the population variance; `eps` keeps the constant-row case defined.
pub fn layer_norm<T: Scalar>(
    x: &Tensor2<T>,
    gain: &Tensor2<T>,
    bias: &Tensor2<T>,
    eps: T,
) -> Result<Tensor2<T>> {
    if !(eps > T::zero()) {
        return Err(Error::Param(format!("layer_norm eps must be > 0, got {}", eps)));
    }
    for (name, t) in [("gain", gain), ("bias", bias)] {
        if t.rows() != 1 || t.cols() != x.cols() {
            return Err(Error::Param(format!(
                "layer_norm {} must be 1x{}, got {}x{}",
                name,
                x.cols(),
                t.rows(),
                t.cols()
            )));
        }
    }
    let n = T::from_f64(x.cols() as f64);
    let mut out = Tensor2::zeros(x.rows(), x.cols());
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
        let orow = out.row_mut(r);
        for c in 0..row.len() {
            let normed = (row[c] - mean) * inv_std;
            orow[c] = normed * gain.at(0, c) + bias.at(0, c);
        }
    }
    Ok(out)
}

/// Summed cross-entropy: one logit row per target position.
///
/// Computed as `logsumexp(row) - row[target]` per position, which is
/// exact and never exponentiates unshifted logits.
pub fn cross_entropy<T: Scalar>(pred_logits: &Tensor2<T>, targets: &[usize]) -> Result<T> {
    if pred_logits.rows() != targets.len() {
        return Err(Error::Param(format!(
            "cross_entropy needs one logit row per target: {} rows, {} targets",
            pred_logits.rows(),
            targets.len()
        )));
    }
    let vocab = pred_logits.cols();
    let mut total = T::zero();
    for (r, &t) in targets.iter().enumerate() {
        if t >= vocab {
            return Err(Error::Index {
                index: t,
                limit: vocab,
            });
        }
        let row = pred_logits.row(r);
        let mut max = T::neg_infinity();
        for &v in row {
            if v > max {
                max = v;
            }
        }
        let mut sum = T::zero();
        for &v in row {
            sum = sum + (v - max).exp();
        }
        let lse = max + sum.ln();
        total = total + (lse - row[t]);
    }
    Ok(total)
}
