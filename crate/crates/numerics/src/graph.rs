//! Tape-based reverse-mode differentiation over matrices.
//!
//! A [`Graph`] records every operation of one forward pass. Values are kept
//! as `rows × cols` matrices (see [`Tensor`] for the folding rule). Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and returns
//! gradients for every trainable parameter that the loss depends on.
//!
//! Nodes that cannot reach a trainable parameter are never differentiated,
//! so frozen sub-networks cost a forward pass only.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::error::{NumericsError, Result};
use crate::tensor::{matmul_raw, Tensor};

/// Tanh-approximation GELU constant `sqrt(2/pi)`.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
pub const GELU_CUBIC: f64 = 0.044_715;
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Gelu(Var),
    Abs(Var),
    Square(Var),
    Sqrt(Var),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Transpose(Var),
    Softmax(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    MeanRows(Var),
    Gather(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    Mask(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar with respect to trainable parameters, keyed by
/// parameter name and shaped like the parameter.
pub type Gradients = BTreeMap<String, Tensor>;

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

fn shape_err(what: &str, a: &Tensor, b: &Tensor) -> NumericsError {
    NumericsError::Shape(format!(
        "{what}: incompatible shapes {:?} and {:?}",
        a.shape(),
        b.shape()
    ))
}

fn gelu_scalar(x: f64) -> f64 {
    let u = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let u = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    let du = GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a constant input. Inputs never receive gradients.
    pub fn input(&mut self, t: Tensor) -> Var {
        let m = t.as_matrix();
        self.push(m, Op::Input, false)
    }

    /// Records a parameter leaf. The same name always maps to the same node.
    pub fn param(&mut self, params: &crate::ParameterSet, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = params.get(name)?.as_matrix();
        let trainable = params.is_trainable(name)?;
        let v = self.push(t, Op::Param, trainable);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// `a (n×k) · b (k×m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let (n, k, m) = (av.rows(), av.cols(), bv.cols());
        let out = Tensor::matrix(n, m, matmul_raw(av.data(), bv.data(), n, k, m))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// Adds a `1×c` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("add_bias", xv, bv));
        }
        let c = xv.cols();
        let mut out = xv.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += bv.data()[i % c];
        }
        let ng = self.ng(x) || self.ng(b);
        Ok(self.push(out, Op::AddBias(x, b), ng))
    }

    fn zip_same(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() || av.cols() != bv.cols() {
            return Err(shape_err(what, av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::matrix(av.rows(), av.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().iter().any(|&v| v == 0.0) {
            return Err(NumericsError::Domain("division by zero".into()));
        }
        let out = self.zip_same(a, b, "div", |x, y| x / y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Div(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v * s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v + c);
        let ng = self.ng(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    /// Tanh-approximation GELU: `0.5·x·(1 + tanh(sqrt(2/pi)·(x + 0.044715·x³)))`.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if !av.is_finite() {
            return Err(NumericsError::Domain("gelu input is not finite".into()));
        }
        let out = av.map(gelu_scalar);
        let ng = self.ng(a);
        Ok(self.push(out, Op::Gelu(a), ng))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::abs);
        let ng = self.ng(a);
        self.push(out, Op::Abs(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        let ng = self.ng(a);
        self.push(out, Op::Square(a), ng)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.data().iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(NumericsError::Domain("sqrt of negative or non-finite value".into()));
        }
        let out = av.map(f64::sqrt);
        let ng = self.ng(a);
        Ok(self.push(out, Op::Sqrt(a), ng))
    }

    /// `max(0, x)` elementwise.
    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        let ng = self.ng(a);
        self.push(out, Op::Relu(a), ng)
    }

    /// Row-wise layer normalisation with affine `gain` and `bias` (`1×c`).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let c = xv.cols();
        if c == 0 {
            return Err(NumericsError::Shape("layer_norm over zero-length axis".into()));
        }
        if gv.len() != c || bv.len() != c {
            return Err(NumericsError::Shape(format!(
                "layer_norm: last axis {c} vs gain {:?} / bias {:?}",
                gv.shape(),
                bv.shape()
            )));
        }
        let r = xv.rows();
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = inv;
            for j in 0..c {
                let h = (row[j] - mean) * inv;
                xhat[i * c + j] = h;
                out[i * c + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let out = Tensor::matrix(r, c, out)?;
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (r, c) = (av.rows(), av.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av.data()[i * c + j];
            }
        }
        let out = Tensor::matrix(c, r, out).expect("transpose keeps size");
        let ng = self.ng(a);
        self.push(out, Op::Transpose(a), ng)
    }

    /// Row-wise softmax. With `causal`, entry `(i, j)` is masked for `j > i`.
    pub fn softmax(&mut self, a: Var, causal: bool) -> Var {
        let av = self.value(a);
        let (r, c) = (av.rows(), av.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = av.row(i);
            let limit = if causal { (i + 1).min(c) } else { c };
            let max = row[..limit].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..limit {
                let e = (row[j] - max).exp();
                out[i * c + j] = e;
                z += e;
            }
            for o in &mut out[i * c..i * c + limit] {
                *o /= z;
            }
        }
        let out = Tensor::matrix(r, c, out).expect("softmax keeps size");
        let ng = self.ng(a);
        self.push(out, Op::Softmax(a), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        let (r, c) = (av.rows(), av.cols());
        if len == 0 || start + len > c {
            return Err(NumericsError::Shape(format!(
                "slice_cols [{start}, {}) out of {c} columns",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&av.row(i)[start..start + len]);
        }
        let out = Tensor::matrix(r, len, out)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceCols(a, start), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| NumericsError::Shape("concat of nothing".into()))?;
        let r = self.value(*first).rows();
        if parts.iter().any(|p| self.value(*p).rows() != r) {
            return Err(NumericsError::Shape("concat_cols: row counts differ".into()));
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(i));
            }
        }
        let out = Tensor::matrix(r, total, out)?;
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Reinterprets the row-major buffer as `rows × cols`.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let av = self.value(a);
        if rows * cols != av.len() {
            return Err(NumericsError::Shape(format!(
                "reshape {}x{} into {rows}x{cols}",
                av.rows(),
                av.cols()
            )));
        }
        let out = Tensor::matrix(rows, cols, av.data().to_vec())?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Reshape(a), ng))
    }

    /// Column-wise mean over rows, giving a `1×c` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (r, c) = (av.rows(), av.cols());
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, v) in out.iter_mut().zip(av.row(i)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        let out = Tensor::matrix(1, c, out).expect("mean_rows");
        let ng = self.ng(a);
        self.push(out, Op::MeanRows(a), ng)
    }

    /// Picks rows of `table` by index (embedding lookup).
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let (r, c) = (tv.rows(), tv.cols());
        if indices.is_empty() {
            return Err(NumericsError::Shape("gather with no indices".into()));
        }
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(NumericsError::Shape(format!("gather index {i} out of {r} rows")));
            }
            out.extend_from_slice(tv.row(i));
        }
        let out = Tensor::matrix(indices.len(), c, out)?;
        let ng = self.ng(table);
        Ok(self.push(out, Op::Gather(table, indices.to_vec()), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out.as_matrix(), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::scalar(av.sum() / av.len() as f64);
        let ng = self.ng(a);
        self.push(out.as_matrix(), Op::Mean(a), ng)
    }

    /// Multiplies elementwise by a fixed mask.
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let av = self.value(a);
        if mask.len() != av.len() {
            return Err(NumericsError::Shape("mask length differs from input".into()));
        }
        let data = av.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::matrix(av.rows(), av.cols(), data)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Mask(a, mask), ng))
    }

    /// Inverted dropout: keeps each value with probability `1 - p` and scales
    /// survivors by `1 / (1 - p)`. `p == 0` is the identity and draws nothing
    /// from `rng`.
    pub fn dropout<R: Rng>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::Config(format!("dropout probability {p} not in [0, 1)")));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.mask(a, mask)
    }

    /// Differentiates the scalar `loss` and returns gradients for every
    /// trainable parameter reached by the tape. Frozen parameters have no
    /// entry.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(NumericsError::Contract(format!(
                "backward needs a scalar loss, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        if !lv.is_finite() {
            return Err(NumericsError::Domain("loss is not finite".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let mut out = Gradients::new();
        for (name, &v) in &self.params {
            if v.0 > loss.0 || !self.nodes[v.0].needs_grad {
                continue;
            }
            let value = &self.nodes[v.0].value;
            let g = grads[v.0]
                .take()
                .unwrap_or_else(|| vec![0.0; value.len()]);
            if g.iter().any(|x| !x.is_finite()) {
                return Err(NumericsError::Domain(format!("gradient of `{name}` is not finite")));
            }
            out.insert(name.clone(), Tensor::matrix(value.rows(), value.cols(), g)?);
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        delta(slot);
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                self.accumulate(grads, *a, |ga| {
                    // dA = dC · Bᵀ, accumulated row-wise against an explicit Bᵀ
                    let bd = bv.data();
                    let mut bt = vec![0.0; m * k];
                    for p in 0..k {
                        for j in 0..m {
                            bt[j * k + p] = bd[p * m + j];
                        }
                    }
                    for i in 0..n {
                        let arow = &mut ga[i * k..(i + 1) * k];
                        for j in 0..m {
                            let gij = g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for (o, &x) in arow.iter_mut().zip(&bt[j * k..(j + 1) * k]) {
                                *o += gij * x;
                            }
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    // dB = Aᵀ · dC
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let a_ip = av.data()[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            for (o, &x) in gb[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *o += a_ip * x;
                            }
                        }
                    }
                });
            }
            Op::AddBias(x, b) => {
                let c = out.cols();
                self.accumulate(grads, *x, |gx| add_into(gx, g));
                self.accumulate(grads, *b, |gb| {
                    for (i, &v) in g.iter().enumerate() {
                        gb[i % c] += v;
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                self.accumulate(grads, *b, |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                self.accumulate(grads, *b, |gb| {
                    for (o, v) in gb.iter_mut().zip(g) {
                        *o -= v;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * bv[i];
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..gb.len() {
                        gb[i] += g[i] * av[i];
                    }
                });
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] / bv[i];
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..gb.len() {
                        gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                    }
                });
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, |ga| {
                    for (o, v) in ga.iter_mut().zip(g) {
                        *o += s * v;
                    }
                });
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, |ga| add_into(ga, g)),
            Op::Gelu(a) => {
                let av = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * gelu_grad_scalar(av[i]);
                    }
                });
            }
            Op::Abs(a) => {
                let av = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * sign(av[i]);
                    }
                });
            }
            Op::Square(a) => {
                let av = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += 2.0 * av[i] * g[i];
                    }
                });
            }
            Op::Sqrt(a) => {
                let ov = out.data();
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        if ov[i] > 0.0 {
                            ga[i] += g[i] * 0.5 / ov[i];
                        }
                    }
                });
            }
            Op::Relu(a) => {
                let av = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        if av[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let c = out.cols();
                let r = out.rows();
                let gv = self.value(*gain).data();
                self.accumulate(grads, *gain, |gg| {
                    for i in 0..r {
                        for j in 0..c {
                            gg[j] += g[i * c + j] * xhat[i * c + j];
                        }
                    }
                });
                self.accumulate(grads, *bias, |gb| {
                    for i in 0..r {
                        for j in 0..c {
                            gb[j] += g[i * c + j];
                        }
                    }
                });
                self.accumulate(grads, *x, |gx| {
                    let n = c as f64;
                    for i in 0..r {
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for j in 0..c {
                            let d = g[i * c + j] * gv[j];
                            sum_d += d;
                            sum_dx += d * xhat[i * c + j];
                        }
                        for j in 0..c {
                            let d = g[i * c + j] * gv[j];
                            gx[i * c + j] +=
                                inv_std[i] / n * (n * d - sum_d - xhat[i * c + j] * sum_dx);
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (r, c) = (out.rows(), out.cols());
                self.accumulate(grads, *a, |ga| {
                    // out is r×c, input is c×r
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g[i * c + j];
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let (r, c) = (out.rows(), out.cols());
                let p = out.data();
                self.accumulate(grads, *a, |ga| {
                    for i in 0..r {
                        let row = i * c..(i + 1) * c;
                        let dot: f64 = p[row.clone()].iter().zip(&g[row.clone()]).map(|(x, y)| x * y).sum();
                        for j in row {
                            ga[j] += p[j] * (g[j] - dot);
                        }
                    }
                });
            }
            Op::SliceCols(a, start) => {
                let (r, len) = (out.rows(), out.cols());
                let c = self.value(*a).cols();
                self.accumulate(grads, *a, |ga| {
                    for i in 0..r {
                        for j in 0..len {
                            ga[i * c + start + j] += g[i * len + j];
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let (r, total) = (out.rows(), out.cols());
                let mut offset = 0;
                for p in parts {
                    let c = self.value(*p).cols();
                    self.accumulate(grads, *p, |gp| {
                        for i in 0..r {
                            for j in 0..c {
                                gp[i * c + j] += g[i * total + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::Reshape(a) => self.accumulate(grads, *a, |ga| add_into(ga, g)),
            Op::MeanRows(a) => {
                let av = self.value(*a);
                let (r, c) = (av.rows(), av.cols());
                self.accumulate(grads, *a, |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j] / r as f64;
                        }
                    }
                });
            }
            Op::Gather(table, indices) => {
                let c = out.cols();
                self.accumulate(grads, *table, |gt| {
                    for (row, &i) in indices.iter().enumerate() {
                        for j in 0..c {
                            gt[i * c + j] += g[row * c + j];
                        }
                    }
                });
            }
            Op::Sum(a) => self.accumulate(grads, *a, |ga| {
                for o in ga.iter_mut() {
                    *o += g[0];
                }
            }),
            Op::Mean(a) => self.accumulate(grads, *a, |ga| {
                let n = ga.len() as f64;
                for o in ga.iter_mut() {
                    *o += g[0] / n;
                }
            }),
            Op::Mask(a, mask) => self.accumulate(grads, *a, |ga| {
                for i in 0..ga.len() {
                    ga[i] += g[i] * mask[i];
                }
            }),
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
