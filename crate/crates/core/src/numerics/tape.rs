//! Reverse-mode differentiation over dense matrices.
//!
//! Every primitive appends one node to the [`Tape`]; [`Tape::backward`] walks the
//! nodes in exact reverse creation order and accumulates gradients into the
//! registered parameters. Nodes that depend on no parameter are never visited.

use std::collections::BTreeMap;

use rand::Rng;

use super::matrix::{dot, Matrix};
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Direction a softmax normalizes along.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Each row sums to one.
    Row,
    /// Each column sums to one.
    Column,
}

/// Variance stabilizer inside the layernorm square root.
pub const LAYERNORM_EPS: f64 = 1e-5;

/// Probability clamp applied before the focal-loss logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

enum Op<T> {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    MatMulTN(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    ScaleBy { s: Var, x: Var },
    Affine { x: Var, scale: T },
    MaskMul { x: Var, mask: Matrix<T> },
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        xhat: Matrix<T>,
        inv_std: Vec<T>,
    },
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var, Axis),
    ConcatCols(Var, Var),
    SliceCols { x: Var, start: usize },
    MaxOverRows { x: Var, argmax: Vec<usize> },
    Dot(Var, Var),
    FocalLoss {
        logits: Var,
        label: usize,
        gamma: T,
        alpha: T,
        probs: Vec<T>,
        guarded: bool,
    },
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients keyed by the parameter id given to [`Tape::param`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: BTreeMap<usize, Matrix<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: usize) -> Option<&Matrix<T>> {
        self.grads.get(&id)
    }

    pub fn take(&mut self, id: usize) -> Option<Matrix<T>> {
        self.grads.remove(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Matrix<T>)> {
        self.grads.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Records primitive operations for one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
    guard_events: usize,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grad_enabled: true,
            guard_events: 0,
        }
    }

    /// A tape that computes values only; [`Tape::backward`] is refused.
    pub fn inference() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of times a probability had to be clamped before a logarithm.
    pub fn guard_events(&self) -> usize {
        self.guard_events
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, needs_grad: bool) -> Var {
        let (op, needs_grad) = if self.grad_enabled {
            (op, needs_grad)
        } else {
            (Op::Constant, false)
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Registers a trainable parameter under `id`.
    pub fn param(&mut self, id: usize, value: Matrix<T>) -> Var {
        self.push(value, Op::Param(id), true)
    }

    fn dim_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Dimension {
            op,
            lhs: self.shape(a),
            rhs: self.shape(b),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), needs))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_nt(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMulNT(a, b), needs))
    }

    /// `aᵀ · b`
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_tn(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMulTN(a, b), needs))
    }

    /// Weighted sum of the rows of `x` (T×d) with weights `w` (T×1), giving 1×d.
    pub fn weighted_sum(&mut self, w: Var, x: Var) -> Result<Var> {
        if self.shape(w).1 != 1 || self.shape(w).0 != self.shape(x).0 {
            return Err(self.dim_err("weighted_sum", w, x));
        }
        self.matmul_tn(w, x)
    }

    /// Adds a 1×cols bias to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(bias) != (1, cols) {
            return Err(self.dim_err("add_bias", x, bias));
        }
        let mut value = self.value(x).clone();
        let b = self.value(bias).as_slice().to_vec();
        for r in 0..rows {
            for (v, &bb) in value.row_mut(r).iter_mut().zip(&b) {
                *v += bb;
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(value, Op::AddRowBias(x, bias), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b)).map_err(|_| self.dim_err("add", a, b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b)).map_err(|_| self.dim_err("sub", a, b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), needs))
    }

    /// Multiplies `x` by the 1×1 value `s`.
    pub fn scale_by(&mut self, s: Var, x: Var) -> Result<Var> {
        let Some(sv) = self.value(s).item() else {
            return Err(self.dim_err("scale_by", s, x));
        };
        let value = self.value(x).scale(sv);
        let needs = self.needs(s) || self.needs(x);
        Ok(self.push(value, Op::ScaleBy { s, x }, needs))
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        let needs = self.needs(x);
        self.push(value, Op::Affine { x, scale }, needs)
    }

    /// Elementwise product with a constant mask.
    pub fn mask_mul(&mut self, x: Var, mask: Matrix<T>) -> Result<Var> {
        if mask.shape() != self.shape(x) {
            return Err(Error::Dimension {
                op: "mask_mul",
                lhs: self.shape(x),
                rhs: mask.shape(),
            });
        }
        let value = self.value(x).hadamard(&mask)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::MaskMul { x, mask }, needs))
    }

    /// Inverted dropout: keeps each element with probability `1 - p` and scales survivors by `1/(1-p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::contract(format!("dropout probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let (rows, cols) = self.shape(x);
        let keep = T::of(1.0 / (1.0 - p));
        let data = (0..rows * cols)
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        self.mask_mul(x, Matrix::from_vec(rows, cols, data)?)
    }

    /// Per-row layer normalization with 1×cols gain and shift.
    pub fn layernorm(&mut self, x: Var, gain: Var, shift: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(gain) != (1, cols) {
            return Err(self.dim_err("layernorm", x, gain));
        }
        if self.shape(shift) != (1, cols) {
            return Err(self.dim_err("layernorm", x, shift));
        }
        let n = T::of(cols as f64);
        let eps = T::of(LAYERNORM_EPS);
        let xv = self.value(x);
        let g = self.value(gain).as_slice();
        let s = self.value(shift).as_slice();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat.set(r, c, h);
                out.set(r, c, g[c] * h + s[c]);
            }
        }
        let needs = self.needs(x) || self.needs(gain) || self.needs(shift);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                shift,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(T::zero()));
        let needs = self.needs(x);
        self.push(value, Op::Relu(x), needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(T::tanh);
        let needs = self.needs(x);
        self.push(value, Op::Tanh(x), needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let needs = self.needs(x);
        self.push(value, Op::Sigmoid(x), needs)
    }

    pub fn softmax(&mut self, x: Var, axis: Axis) -> Var {
        let value = softmax(self.value(x), axis);
        let needs = self.needs(x);
        self.push(value, Op::Softmax(x, axis), needs)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(self.dim_err("concat_cols", a, b));
        }
        let mut value = Matrix::zeros(ra, ca + cb);
        for r in 0..ra {
            value.row_mut(r)[..ca].copy_from_slice(self.value(a).row(r));
            value.row_mut(r)[ca..].copy_from_slice(self.value(b).row(r));
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::ConcatCols(a, b), needs))
    }

    /// Columns `start..start + len` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if start + len > cols || len == 0 {
            return Err(Error::Dimension {
                op: "slice_cols",
                lhs: (rows, cols),
                rhs: (start, len),
            });
        }
        let mut value = Matrix::zeros(rows, len);
        for r in 0..rows {
            value
                .row_mut(r)
                .copy_from_slice(&self.value(x).row(r)[start..start + len]);
        }
        let needs = self.needs(x);
        Ok(self.push(value, Op::SliceCols { x, start }, needs))
    }

    /// Column-wise maximum over rows, giving 1×cols. Ties go to the earliest row.
    pub fn max_over_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if rows == 0 {
            return Err(Error::contract("max_over_rows of an empty matrix"));
        }
        let xv = self.value(x);
        let mut argmax = vec![0usize; cols];
        let mut value = Matrix::zeros(1, cols);
        for c in 0..cols {
            let mut best = xv.get(0, c);
            for r in 1..rows {
                let v = xv.get(r, c);
                if v > best {
                    best = v;
                    argmax[c] = r;
                }
            }
            value.set(0, c, best);
        }
        let needs = self.needs(x);
        Ok(self.push(value, Op::MaxOverRows { x, argmax }, needs))
    }

    /// Inner product of two equally shaped values, giving 1×1.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.dim_err("dot", a, b));
        }
        let value = Matrix::scalar(dot(self.value(a).as_slice(), self.value(b).as_slice()));
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Dot(a, b), needs))
    }

    /// Focal loss `-alpha (1 - p_t)^gamma ln p_t` over a 1×K logit row, with `p = softmax(logits)`.
    pub fn focal_loss(&mut self, logits: Var, label: usize, gamma: T, alpha: T) -> Result<Var> {
        let (rows, k) = self.shape(logits);
        if rows != 1 || label >= k {
            return Err(Error::Dimension {
                op: "focal_loss",
                lhs: (rows, k),
                rhs: (1, label + 1),
            });
        }
        if gamma < T::zero() || alpha <= T::zero() {
            return Err(Error::contract("focal loss needs gamma >= 0 and a positive class weight"));
        }
        let probs = softmax(self.value(logits), Axis::Row).into_vec();
        let lo = T::of(PROB_CLAMP);
        let hi = T::one() - lo;
        let raw = probs[label];
        let guarded = raw < lo || raw > hi;
        if guarded {
            self.guard_events += 1;
        }
        let loss = if guarded {
            let pt = raw.max(lo).min(hi);
            -alpha * (T::one() - pt).powf(gamma) * pt.ln()
        } else {
            let (one_minus, ln_pt) = focal_terms(self.value(logits).as_slice(), &probs, label);
            -alpha * one_minus.powf(gamma) * ln_pt
        };
        let needs = self.needs(logits);
        Ok(self.push(
            Matrix::scalar(loss),
            Op::FocalLoss {
                logits,
                label,
                gamma,
                alpha,
                probs,
                guarded,
            },
            needs,
        ))
    }

    /// Gradients of the scalar `loss` with respect to every registered parameter.
    ///
    /// Parameters the loss does not depend on receive zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if !self.grad_enabled {
            return Err(Error::contract("backward on an inference tape"));
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if let Op::Param(_) = node.op {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
        }

        let mut out = BTreeMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                let g = grads
                    .get_mut(idx)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()));
                match out.get_mut(&id) {
                    None => {
                        out.insert(id, g);
                    }
                    Some(acc) => Matrix::add_assign(acc, &g)?,
                }
            }
        }
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, idx: usize, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, delta: Matrix<T>| -> Result<()> {
            if !self.nodes[v.0].needs_grad {
                return Ok(());
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot => {
                    *slot = Some(delta);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.matmul_nt(val(*b))?)?;
                }
                if self.needs(*b) {
                    acc(*b, val(*a).matmul_tn(g)?)?;
                }
            }
            Op::MatMulNT(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.matmul(val(*b))?)?;
                }
                if self.needs(*b) {
                    acc(*b, g.matmul_tn(val(*a))?)?;
                }
            }
            Op::MatMulTN(a, b) => {
                if self.needs(*a) {
                    acc(*a, val(*b).matmul_nt(g)?)?;
                }
                if self.needs(*b) {
                    acc(*b, val(*a).matmul(g)?)?;
                }
            }
            Op::AddRowBias(x, bias) => {
                acc(*x, g.clone())?;
                if self.needs(*bias) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*bias, gb)?;
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.clone())?;
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.scale(-T::one()))?;
            }
            Op::ScaleBy { s, x } => {
                let sv = val(*s).as_slice()[0];
                acc(*x, g.scale(sv))?;
                if self.needs(*s) {
                    acc(*s, Matrix::scalar(dot(g.as_slice(), val(*x).as_slice())))?;
                }
            }
            Op::Affine { x, scale } => acc(*x, g.scale(*scale))?,
            Op::MaskMul { x, mask } => acc(*x, g.hadamard(mask)?)?,
            Op::LayerNorm {
                x,
                gain,
                shift,
                xhat,
                inv_std,
            } => {
                let (rows, cols) = g.shape();
                let gv = val(*gain).as_slice();
                if self.needs(*gain) || self.needs(*shift) {
                    let mut dgain = Matrix::zeros(1, cols);
                    let mut dshift = Matrix::zeros(1, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            let gg = g.get(r, c);
                            dgain.as_mut_slice()[c] += gg * xhat.get(r, c);
                            dshift.as_mut_slice()[c] += gg;
                        }
                    }
                    acc(*gain, dgain)?;
                    acc(*shift, dshift)?;
                }
                if self.needs(*x) {
                    let n = T::of(cols as f64);
                    let mut dx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let mut sum_d = T::zero();
                        let mut sum_dh = T::zero();
                        for c in 0..cols {
                            let d = g.get(r, c) * gv[c];
                            sum_d += d;
                            sum_dh += d * xhat.get(r, c);
                        }
                        for c in 0..cols {
                            let d = g.get(r, c) * gv[c];
                            let h = xhat.get(r, c);
                            dx.set(r, c, inv_std[r] / n * (n * d - sum_d - h * sum_dh));
                        }
                    }
                    acc(*x, dx)?;
                }
            }
            Op::Relu(x) => {
                let xv = val(*x);
                let mut d = g.clone();
                for (o, &v) in d.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                    if v <= T::zero() {
                        *o = T::zero();
                    }
                }
                acc(*x, d)?;
            }
            Op::Tanh(x) => {
                let y = &node.value;
                let mut d = g.clone();
                for (o, &t) in d.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *o *= T::one() - t * t;
                }
                acc(*x, d)?;
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                let mut d = g.clone();
                for (o, &s) in d.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *o *= s * (T::one() - s);
                }
                acc(*x, d)?;
            }
            Op::Softmax(x, axis) => acc(*x, softmax_backward(&node.value, g, *axis))?,
            Op::ConcatCols(a, b) => {
                let ca = self.shape(*a).1;
                let cb = self.shape(*b).1;
                let mut ga = Matrix::zeros(g.rows(), ca);
                let mut gb = Matrix::zeros(g.rows(), cb);
                for r in 0..g.rows() {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                acc(*a, ga)?;
                acc(*b, gb)?;
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = self.shape(*x);
                let mut d = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*x, d)?;
            }
            Op::MaxOverRows { x, argmax } => {
                let (rows, cols) = self.shape(*x);
                let mut d = Matrix::zeros(rows, cols);
                for (c, &r) in argmax.iter().enumerate() {
                    d.set(r, c, g.get(0, c));
                }
                acc(*x, d)?;
            }
            Op::Dot(a, b) => {
                let gs = g.as_slice()[0];
                if self.needs(*a) {
                    acc(*a, val(*b).scale(gs))?;
                }
                if self.needs(*b) {
                    acc(*b, val(*a).scale(gs))?;
                }
            }
            Op::FocalLoss {
                logits,
                label,
                gamma,
                alpha,
                probs,
                guarded,
            } => {
                let k = probs.len();
                let mut d = Matrix::zeros(1, k);
                if !guarded {
                    let gs = g.as_slice()[0];
                    let pt = probs[*label];
                    let (one_minus, ln_pt) = focal_terms(self.value(*logits).as_slice(), probs, *label);
                    // d/dp_t of -alpha (1-p)^gamma ln p
                    let dl_dpt = if *gamma == T::zero() {
                        -*alpha / pt
                    } else {
                        *alpha * (*gamma * one_minus.powf(*gamma - T::one()) * ln_pt - one_minus.powf(*gamma) / pt)
                    };
                    for j in 0..k {
                        let delta = if j == *label { T::one() } else { T::zero() };
                        d.set(0, j, gs * dl_dpt * pt * (delta - probs[j]));
                    }
                }
                acc(*logits, d)?;
            }
        }
        Ok(())
    }
}

/// `1 - p_t` as the sum of the other probabilities and `ln p_t` from the logits,
/// both free of the cancellation that `1 - p_t` and `ln(p_t)` suffer near `p_t = 1`.
fn focal_terms<T: Scalar>(logits: &[T], probs: &[T], label: usize) -> (T, T) {
    let one_minus = probs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, &p)| p)
        .sum::<T>();
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    (one_minus, logits[label] - lse)
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable softmax of a matrix along `axis`.
pub fn softmax<T: Scalar>(x: &Matrix<T>, axis: Axis) -> Matrix<T> {
    let (rows, cols) = x.shape();
    let mut out = x.clone();
    let (outer, inner) = match axis {
        Axis::Row => (rows, cols),
        Axis::Column => (cols, rows),
    };
    let index = |o: usize, i: usize| match axis {
        Axis::Row => o * cols + i,
        Axis::Column => i * cols + o,
    };
    let data = out.as_mut_slice();
    for o in 0..outer {
        let mut max = T::neg_infinity();
        for i in 0..inner {
            max = max.max(data[index(o, i)]);
        }
        let mut sum = T::zero();
        for i in 0..inner {
            let e = (data[index(o, i)] - max).exp();
            data[index(o, i)] = e;
            sum += e;
        }
        for i in 0..inner {
            data[index(o, i)] /= sum;
        }
    }
    out
}

fn softmax_backward<T: Scalar>(y: &Matrix<T>, g: &Matrix<T>, axis: Axis) -> Matrix<T> {
    let (rows, cols) = y.shape();
    let mut d = Matrix::zeros(rows, cols);
    match axis {
        Axis::Row => {
            for r in 0..rows {
                let s = dot(y.row(r), g.row(r));
                for c in 0..cols {
                    d.set(r, c, y.get(r, c) * (g.get(r, c) - s));
                }
            }
        }
        Axis::Column => {
            for c in 0..cols {
                let s = (0..rows).map(|r| y.get(r, c) * g.get(r, c)).sum::<T>();
                for r in 0..rows {
                    d.set(r, c, y.get(r, c) * (g.get(r, c) - s));
                }
            }
        }
    }
    d
}
