//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every primitive applied during one forward pass. Each
//! record keeps its output value, which is all the backward rules need, and
//! the identifiers of its inputs. Because records are only ever appended,
//! inputs always precede their consumers and a single reverse sweep visits
//! each record once.
//!
//! ```
//! use irb_motion::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::from_vec(vec![0.5, -1.0]).unwrap());
//! let y = tape.tanh(x);
//! let loss = tape.sum_all(y);
//! let grads = tape.backward(loss, &[x]).unwrap();
//! let g = grads.get(x).unwrap();
//! assert!((g.data()[0] - (1.0 - 0.5f64.tanh().powi(2))).abs() < 1e-15);
//! ```

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d { input: Var, kernels: Var, bias: Var },
    MatMul { a: Var, b: Var },
    Concat { parts: Vec<Var> },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Tanh { x: Var },
    Scale { x: Var, factor: f64 },
    SumAll { x: Var },
    Reshape { x: Var },
    SliceLast { x: Var, start: usize },
    AddRowBias { x: Var, bias: Var },
    AddColumn { x: Var, column: Var },
    Gather { x: Var, indices: Vec<usize> },
    MeanNorm { x: Var, squared: bool },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv1d { .. } => "conv1d_valid",
            Op::MatMul { .. } => "matmul",
            Op::Concat { .. } => "concat",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Tanh { .. } => "tanh",
            Op::Scale { .. } => "scale",
            Op::SumAll { .. } => "sum_all",
            Op::Reshape { .. } => "reshape",
            Op::SliceLast { .. } => "slice_last",
            Op::AddRowBias { .. } => "add_row_bias",
            Op::AddColumn { .. } => "add_column",
            Op::Gather { .. } => "gather",
            Op::MeanNorm { .. } => "mean_norm",
        }
    }
}

#[derive(Debug)]
struct Record {
    op: Op,
    value: Tensor,
}

/// Deliberate corruption of one backward rule, used to prove that the
/// gradient checker notices broken derivatives.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Scales the tanh derivative by 1.1.
    TanhBackward,
    /// Drops the bias contribution from convolution gradients.
    ConvBiasBackward,
}

/// One forward pass worth of recorded operations.
#[derive(Debug, Default)]
pub struct Tape {
    records: Vec<Record>,
    fault: Option<Fault>,
}

/// Gradients of a scalar with respect to a chosen set of leaves.
#[derive(Clone, Debug)]
pub struct GradientStore {
    keys: Vec<Var>,
    grads: Vec<Tensor>,
}

impl GradientStore {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.keys.iter().position(|&k| k == var).map(|i| &self.grads[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.keys.iter().copied().zip(&self.grads)
    }

    /// Gradients in the order the leaves were requested.
    pub fn into_grads(self) -> Vec<Tensor> {
        self.grads
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn with_fault(fault: Option<Fault>) -> Self {
        Self {
            records: Vec::new(),
            fault,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Every recorded value, in recording order.
    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (0..self.records.len()).map(Var)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.records[var.0].value
    }

    /// Name of the operation that produced `var`.
    pub fn op_name(&self, var: Var) -> &'static str {
        self.records[var.0].op.name()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.records.push(Record { op, value });
        Var(self.records.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Valid (unpadded) stride-1 convolution.
    ///
    /// `input` is a single signal `[L]` or a batch of signals `[M, L]`;
    /// `kernels` is `[C, k]` and `bias` is `[C]`. The output is `[C, L-k+1]`
    /// or `[M, C, L-k+1]` with `out[c][t] = bias[c] + Σ_i input[t+i]·kernels[c][i]`.
    pub fn conv1d_valid(&mut self, input: Var, kernels: Var, bias: Var) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(kernels);
        let b = self.value(bias);
        let (m, len) = match x.shape() {
            [l] => (1, *l),
            [m, l] => (*m, *l),
            s => return Err(Error::shape("conv1d_valid", s, &[0])),
        };
        let (channels, k) = w.dims2("conv1d_valid")?;
        if b.shape() != [channels] {
            return Err(Error::shape("conv1d_valid", b.shape(), &[channels]));
        }
        if k > len {
            return Err(Error::Config(format!(
                "kernel of size {k} is longer than the input of length {len}"
            )));
        }
        let out_len = len - k + 1;
        let (xd, wd, bd) = (x.data(), w.data(), b.data());
        let mut out = vec![0.0; m * channels * out_len];
        for s in 0..m {
            let signal = &xd[s * len..(s + 1) * len];
            for c in 0..channels {
                let kern = &wd[c * k..(c + 1) * k];
                let dst = &mut out[(s * channels + c) * out_len..(s * channels + c + 1) * out_len];
                for (t, o) in dst.iter_mut().enumerate() {
                    let window = &signal[t..t + k];
                    *o = bd[c] + window.iter().zip(kern).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        let shape = if x.rank() == 1 {
            vec![channels, out_len]
        } else {
            vec![m, channels, out_len]
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            Op::Conv1d {
                input,
                kernels,
                bias,
            },
            value,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k) = va.dims2("matmul")?;
        let (k2, n) = vb.dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", va.shape(), vb.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, va.data(), false, vb.data(), false, 0.0, &mut out);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(Op::MatMul { a, b }, value))
    }

    /// Concatenates along the last axis; all leading extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidTensor("concat of an empty list".into()))?;
        let lead = self.value(*first).shape().split_last().unwrap().1.to_vec();
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            let (w, l) = s.split_last().unwrap();
            if l != lead.as_slice() {
                return Err(Error::shape("concat", self.value(*first).shape(), s));
            }
            widths.push(*w);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            value,
        ))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(op, va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add { a, b }, value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub { a, b }, value))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        self.push(Op::Tanh { x }, value)
    }

    /// Multiplies every element by a constant.
    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(Op::Scale { x, factor }, value)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(Op::SumAll { x }, value)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(Op::Reshape { x }, value))
    }

    /// Keeps `len` entries of the last axis starting at `start`.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x);
        let (&w, lead) = v.shape().split_last().unwrap();
        if len == 0 || start + len > w {
            return Err(Error::InvalidTensor(format!(
                "slice [{start}, {}) outside last extent {w}",
                start + len
            )));
        }
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&v.data()[r * w + start..r * w + start + len]);
        }
        let mut shape = lead.to_vec();
        shape.push(len);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(Op::SliceLast { x, start }, value))
    }

    /// `x[r][c] + bias[c]` for a matrix `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let (_, c) = vx.dims2("add_row_bias")?;
        if vb.shape() != [c] {
            return Err(Error::shape("add_row_bias", vx.shape(), vb.shape()));
        }
        let mut out = vx.data().to_vec();
        for row in out.chunks_mut(c) {
            row.iter_mut().zip(vb.data()).for_each(|(o, b)| *o += b);
        }
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        Ok(self.push(Op::AddRowBias { x, bias }, value))
    }

    /// `x[r][c] + column[r]` for a matrix `x`.
    pub fn add_column(&mut self, x: Var, column: Var) -> Result<Var> {
        let (vx, vc) = (self.value(x), self.value(column));
        let (r, c) = vx.dims2("add_column")?;
        if vc.shape() != [r] {
            return Err(Error::shape("add_column", vx.shape(), vc.shape()));
        }
        let mut out = vx.data().to_vec();
        for (row, &v) in out.chunks_mut(c).zip(vc.data()) {
            row.iter_mut().for_each(|o| *o += v);
        }
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        Ok(self.push(Op::AddColumn { x, column }, value))
    }

    /// Picks flat elements of `x` into a tensor of the given shape.
    pub fn gather(&mut self, x: Var, indices: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= v.numel()) {
            return Err(Error::InvalidTensor(format!(
                "gather index {bad} outside {} elements",
                v.numel()
            )));
        }
        let data = indices.iter().map(|&i| v.data()[i]).collect();
        let value = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(Op::Gather { x, indices }, value))
    }

    /// Mean over groups of the last axis of the group's Euclidean norm
    /// (or squared norm).
    pub fn mean_norm(&mut self, x: Var, squared: bool) -> Var {
        let v = self.value(x);
        let d = *v.shape().last().unwrap();
        let groups = v.numel() / d;
        let total: f64 = v
            .data()
            .chunks(d)
            .map(|g| {
                let sq: f64 = g.iter().map(|a| a * a).sum();
                if squared {
                    sq
                } else {
                    sq.sqrt()
                }
            })
            .sum();
        let value = Tensor::scalar(total / groups as f64);
        self.push(Op::MeanNorm { x, squared }, value)
    }

    /// Reverse sweep from a one-element `loss`.
    ///
    /// Leaves that `loss` does not depend on receive zero gradients.
    pub fn backward(&self, loss: Var, leaves: &[Var]) -> Result<GradientStore> {
        if loss.0 >= self.records.len() {
            return Err(Error::NotOnTape(loss.0));
        }
        if let Some(bad) = leaves.iter().find(|v| v.0 >= self.records.len()) {
            return Err(Error::NotOnTape(bad.0));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::InvalidTensor(format!(
                "backward needs a one-element loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(vec![1]));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let out = leaves
            .iter()
            .map(|&v| {
                grads
                    .get(v.0)
                    .and_then(Clone::clone)
                    .unwrap_or_else(|| Tensor::zeros(self.value(v).shape().to_vec()))
            })
            .collect();
        Ok(GradientStore {
            keys: leaves.to_vec(),
            grads: out,
        })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let rec = &self.records[idx];
        let gd = g.data();
        match &rec.op {
            Op::Leaf => {}
            Op::Conv1d {
                input,
                kernels,
                bias,
            } => {
                let x = self.value(*input);
                let w = self.value(*kernels);
                let (channels, k) = (w.shape()[0], w.shape()[1]);
                let len = *x.shape().last().unwrap();
                let m = x.numel() / len;
                let out_len = len - k + 1;
                let (xd, wd) = (x.data(), w.data());
                let mut dx = vec![0.0; xd.len()];
                let mut dw = vec![0.0; wd.len()];
                let mut db = vec![0.0; channels];
                for s in 0..m {
                    let signal = &xd[s * len..(s + 1) * len];
                    let dsignal = &mut dx[s * len..(s + 1) * len];
                    for c in 0..channels {
                        let go = &gd[(s * channels + c) * out_len..(s * channels + c + 1) * out_len];
                        let kern = &wd[c * k..(c + 1) * k];
                        let dkern = &mut dw[c * k..(c + 1) * k];
                        for (t, &gv) in go.iter().enumerate() {
                            db[c] += gv;
                            for i in 0..k {
                                dkern[i] += gv * signal[t + i];
                                dsignal[t + i] += gv * kern[i];
                            }
                        }
                    }
                }
                if self.fault == Some(Fault::ConvBiasBackward) {
                    db.iter_mut().for_each(|v| *v = 0.0);
                }
                accumulate(grads, *input, x.shape(), dx);
                accumulate(grads, *kernels, w.shape(), dw);
                accumulate(grads, *bias, &[channels], db);
            }
            Op::MatMul { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k) = (va.shape()[0], va.shape()[1]);
                let n = vb.shape()[1];
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, gd, false, vb.data(), true, 0.0, &mut da);
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, va.data(), true, gd, false, 0.0, &mut db);
                accumulate(grads, *a, va.shape(), da);
                accumulate(grads, *b, vb.shape(), db);
            }
            Op::Concat { parts } => {
                let total = *rec.value.shape().last().unwrap();
                let rows = rec.value.numel() / total;
                let mut offset = 0;
                for &p in parts {
                    let shape = self.value(p).shape();
                    let w = *shape.last().unwrap();
                    let mut dp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        dp.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                    }
                    accumulate(grads, p, shape, dp);
                    offset += w;
                }
            }
            Op::Add { a, b } => {
                accumulate(grads, *a, g.shape(), gd.to_vec());
                accumulate(grads, *b, g.shape(), gd.to_vec());
            }
            Op::Sub { a, b } => {
                accumulate(grads, *a, g.shape(), gd.to_vec());
                accumulate(grads, *b, g.shape(), gd.iter().map(|v| -v).collect());
            }
            Op::Tanh { x } => {
                let scale = if self.fault == Some(Fault::TanhBackward) { 1.1 } else { 1.0 };
                let dx = rec
                    .value
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(y, gv)| scale * gv * (1.0 - y * y))
                    .collect();
                accumulate(grads, *x, g.shape(), dx);
            }
            Op::Scale { x, factor } => {
                accumulate(grads, *x, g.shape(), gd.iter().map(|v| v * factor).collect());
            }
            Op::SumAll { x } => {
                let shape = self.value(*x).shape();
                let n = self.value(*x).numel();
                accumulate(grads, *x, shape, vec![gd[0]; n]);
            }
            Op::Reshape { x } => {
                accumulate(grads, *x, self.value(*x).shape(), gd.to_vec());
            }
            Op::SliceLast { x, start } => {
                let shape = self.value(*x).shape();
                let w = *shape.last().unwrap();
                let len = *g.shape().last().unwrap();
                let mut dx = vec![0.0; self.value(*x).numel()];
                for (r, chunk) in gd.chunks(len).enumerate() {
                    dx[r * w + start..r * w + start + len].copy_from_slice(chunk);
                }
                accumulate(grads, *x, shape, dx);
            }
            Op::AddRowBias { x, bias } => {
                let c = g.shape()[1];
                let mut db = vec![0.0; c];
                for row in gd.chunks(c) {
                    db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
                accumulate(grads, *x, g.shape(), gd.to_vec());
                accumulate(grads, *bias, &[c], db);
            }
            Op::AddColumn { x, column } => {
                let (r, c) = (g.shape()[0], g.shape()[1]);
                let dc = gd.chunks(c).map(|row| row.iter().sum()).collect();
                accumulate(grads, *x, g.shape(), gd.to_vec());
                accumulate(grads, *column, &[r], dc);
            }
            Op::Gather { x, indices } => {
                let mut dx = vec![0.0; self.value(*x).numel()];
                for (&i, &gv) in indices.iter().zip(gd) {
                    dx[i] += gv;
                }
                accumulate(grads, *x, self.value(*x).shape(), dx);
            }
            Op::MeanNorm { x, squared } => {
                let v = self.value(*x);
                let d = *v.shape().last().unwrap();
                let groups = (v.numel() / d) as f64;
                let mut dx = vec![0.0; v.numel()];
                for (src, dst) in v.data().chunks(d).zip(dx.chunks_mut(d)) {
                    if *squared {
                        for (o, a) in dst.iter_mut().zip(src) {
                            *o = gd[0] * 2.0 * a / groups;
                        }
                    } else {
                        let norm = src.iter().map(|a| a * a).sum::<f64>().sqrt();
                        if norm > 0.0 {
                            for (o, a) in dst.iter_mut().zip(src) {
                                *o = gd[0] * a / (norm * groups);
                            }
                        }
                    }
                }
                accumulate(grads, *x, v.shape(), dx);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, shape: &[usize], delta: Vec<f64>) {
    match &mut grads[var.0] {
        Some(existing) => existing
            .data_mut()
            .iter_mut()
            .zip(delta)
            .for_each(|(e, d)| *e += d),
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), delta).expect("gradient shape"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
        let k = tape.leaf(t(&[1, 1], &[1.0]));
        let b = tape.leaf(t(&[1], &[0.0]));
        let y = tape.conv1d_valid(x, k, b).unwrap();
        assert_eq!(tape.value(y), &t(&[1, 3], &[1.0, 2.0, 3.0]));
    }

    #[test]
    fn conv_difference_kernel() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[5], &[1.0, 2.0, 3.0, 4.0, 5.0]));
        let k = tape.leaf(t(&[1, 3], &[1.0, 0.0, -1.0]));
        let b = tape.leaf(t(&[1], &[0.0]));
        let y = tape.conv1d_valid(x, k, b).unwrap();
        assert_eq!(tape.value(y), &t(&[1, 3], &[-2.0, -2.0, -2.0]));
    }

    #[test]
    fn conv_table_row_one_shape() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(vec![5]));
        let k = tape.leaf(Tensor::zeros(vec![17, 2]));
        let b = tape.leaf(Tensor::zeros(vec![17]));
        let y = tape.conv1d_valid(x, k, b).unwrap();
        assert_eq!(tape.value(y).shape(), &[17, 4]);
        assert_eq!(tape.value(y).numel(), 68);
    }

    #[test]
    fn conv_rejects_long_kernel() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(vec![3]));
        let k = tape.leaf(Tensor::zeros(vec![1, 4]));
        let b = tape.leaf(Tensor::zeros(vec![1]));
        assert!(matches!(tape.conv1d_valid(x, k, b), Err(Error::Config(_))));
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(t(&[2, 1], &[5.0, 6.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &t(&[2, 1], &[17.0, 39.0]));

        let i = tape.leaf(Tensor::identity(2));
        let h = tape.leaf(t(&[2, 3], &[1.0, -2.0, 3.0, 4.0, 5.0, -6.0]));
        let ih = tape.matmul(i, h).unwrap();
        assert_eq!(tape.value(ih), tape.value(h));

        let err = tape.matmul(b, h).unwrap_err().to_string();
        assert!(err.contains("[2, 1]") && err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn concat_examples() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2], &[1.0, 2.0]));
        let b = tape.leaf(t(&[1], &[3.0]));
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(c), &t(&[3], &[1.0, 2.0, 3.0]));
        let single = tape.concat(&[a]).unwrap();
        assert_eq!(tape.value(single), tape.value(a));
        assert!(tape.concat(&[]).is_err());

        let parts: Vec<Var> = [68, 48, 112, 78, 44, 10]
            .iter()
            .map(|&n| tape.leaf(Tensor::zeros(vec![n])))
            .collect();
        let e = tape.concat(&parts).unwrap();
        assert_eq!(tape.value(e).shape(), &[360]);
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
        let z = tape.leaf(Tensor::zeros(vec![3]));
        let s = tape.add(x, z).unwrap();
        assert_eq!(tape.value(s), tape.value(x));
        let zero = tape.leaf(Tensor::scalar(0.0));
        let tz = tape.tanh(zero);
        assert_eq!(tape.value(tz).item(), Some(0.0));
        let sum = tape.sum_all(x);
        assert_eq!(tape.value(sum).item(), Some(6.0));
        let short = tape.leaf(Tensor::zeros(vec![2]));
        assert!(tape.add(x, short).is_err());
    }

    #[test]
    fn sum_all_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(vec![2, 3], 0.7));
        let loss = tape.sum_all(x);
        let g = tape.backward(loss, &[x]).unwrap();
        assert_eq!(g.get(x).unwrap(), &Tensor::ones(vec![2, 3]));
    }

    #[test]
    fn add_passes_gradient_unchanged() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2], &[1.0, 2.0]));
        let b = tape.leaf(t(&[2], &[3.0, 4.0]));
        let w = tape.leaf(t(&[2], &[0.5, -1.5]));
        let s = tape.add(a, b).unwrap();
        let d = tape.sub(s, w).unwrap();
        let loss = tape.sum_all(d);
        let g = tape.backward(loss, &[a, b, w]).unwrap();
        assert_eq!(g.get(a), g.get(b));
        assert_eq!(g.get(w).unwrap().data(), &[-1.0, -1.0]);
    }

    #[test]
    fn unreachable_leaf_gets_zeros() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        let unused = tape.leaf(Tensor::ones(vec![3, 2]));
        let loss = tape.sum_all(x);
        let g = tape.backward(loss, &[unused]).unwrap();
        assert_eq!(g.get(unused).unwrap(), &Tensor::zeros(vec![3, 2]));
    }

    #[test]
    fn backward_rejects_foreign_values() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(Var(10), &[x]), Err(Error::NotOnTape(10))));
        assert!(tape.backward(x, &[x]).is_err());
    }

    #[test]
    fn mean_norm_values() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 3], &[3.0, 4.0, 0.0, 0.0, 0.0, 0.0]));
        let m = tape.mean_norm(x, false);
        assert_eq!(tape.value(m).item(), Some(2.5));
        let m2 = tape.mean_norm(x, true);
        assert_eq!(tape.value(m2).item(), Some(12.5));
        // zero-length group gets a zero subgradient
        let g = tape.backward(m, &[x]).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.3, 0.4, 0.0, 0.0, 0.0, 0.0]);
    }
}
