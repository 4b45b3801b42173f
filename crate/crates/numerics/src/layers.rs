//! Parameterised building blocks recorded on a [`Graph`].
//!
//! Every block reads its weights from a [`ParameterSet`] under a name
//! prefix, e.g. a dense layer at `fusion.f1` uses `fusion.f1.w` (`in × out`)
//! and `fusion.f1.b` (`out`). Inputs are row-major with one item per row, so
//! a dense layer computes `y = x·W + b`.

use rand::Rng;

use crate::error::{NumericsError, Result};
use crate::graph::{Graph, Var};
use crate::params::ParameterSet;
use crate::tensor::Tensor;

/// MLP expansion ratio inside attention blocks.
pub const MLP_RATIO: usize = 4;

pub fn dense(g: &mut Graph, x: Var, params: &ParameterSet, prefix: &str) -> Result<Var> {
    let w = g.param(params, &format!("{prefix}.w"))?;
    let b = g.param(params, &format!("{prefix}.b"))?;
    let xw = g.matmul(x, w)?;
    g.add_bias(xw, b)
}

pub fn norm(g: &mut Graph, x: Var, params: &ParameterSet, prefix: &str) -> Result<Var> {
    let gain = g.param(params, &format!("{prefix}.gain"))?;
    let bias = g.param(params, &format!("{prefix}.bias"))?;
    g.layer_norm(x, gain, bias)
}

/// Three dense layers with GELU between them: `l3(gelu(l2(gelu(l1(x)))))`.
pub fn mlp3(g: &mut Graph, x: Var, params: &ParameterSet, prefix: &str) -> Result<Var> {
    let h = dense(g, x, params, &format!("{prefix}.l1"))?;
    let h = g.gelu(h)?;
    let h = dense(g, h, params, &format!("{prefix}.l2"))?;
    let h = g.gelu(h)?;
    dense(g, h, params, &format!("{prefix}.l3"))
}

/// Multi-head scaled dot-product self-attention over the rows of `x`.
pub fn self_attention(
    g: &mut Graph,
    x: Var,
    params: &ParameterSet,
    prefix: &str,
    heads: usize,
    causal: bool,
) -> Result<Var> {
    let dim = g.value(x).cols();
    if heads == 0 || dim % heads != 0 {
        return Err(NumericsError::Config(format!(
            "{heads} heads do not divide token dim {dim}"
        )));
    }
    let hd = dim / heads;
    let q = dense(g, x, params, &format!("{prefix}.q"))?;
    let k = dense(g, x, params, &format!("{prefix}.k"))?;
    let v = dense(g, x, params, &format!("{prefix}.v"))?;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * hd, hd)?;
        let kh = g.slice_cols(k, h * hd, hd)?;
        let vh = g.slice_cols(v, h * hd, hd)?;
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale);
        let probs = g.softmax(scores, causal);
        outs.push(g.matmul(probs, vh)?);
    }
    let merged = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
    dense(g, merged, params, &format!("{prefix}.o"))
}

/// Pre-norm transformer block:
/// `h = x + attn(ln1(x))`, `out = h + mlp(ln2(h))`, MLP widening by [`MLP_RATIO`].
pub fn transformer_block(
    g: &mut Graph,
    x: Var,
    params: &ParameterSet,
    prefix: &str,
    heads: usize,
    causal: bool,
) -> Result<Var> {
    let n1 = norm(g, x, params, &format!("{prefix}.ln1"))?;
    let a = self_attention(g, n1, params, &format!("{prefix}.attn"), heads, causal)?;
    let h = g.add(x, a)?;
    let n2 = norm(g, h, params, &format!("{prefix}.ln2"))?;
    let m = dense(g, n2, params, &format!("{prefix}.mlp.fc"))?;
    let m = g.gelu(m)?;
    let m = dense(g, m, params, &format!("{prefix}.mlp.proj"))?;
    g.add(h, m)
}

pub fn init_dense<R: Rng>(
    params: &mut ParameterSet,
    prefix: &str,
    inp: usize,
    out: usize,
    rng: &mut R,
) -> Result<()> {
    let std = 1.0 / (inp as f64).sqrt();
    params.init_normal(format!("{prefix}.w"), &[inp, out], std, rng)?;
    params.init_constant(format!("{prefix}.b"), &[out], 0.0)
}

pub fn init_norm(params: &mut ParameterSet, prefix: &str, dim: usize) -> Result<()> {
    params.init_constant(format!("{prefix}.gain"), &[dim], 1.0)?;
    params.init_constant(format!("{prefix}.bias"), &[dim], 0.0)
}

pub fn init_mlp3<R: Rng>(
    params: &mut ParameterSet,
    prefix: &str,
    dims: [usize; 4],
    rng: &mut R,
) -> Result<()> {
    init_dense(params, &format!("{prefix}.l1"), dims[0], dims[1], rng)?;
    init_dense(params, &format!("{prefix}.l2"), dims[1], dims[2], rng)?;
    init_dense(params, &format!("{prefix}.l3"), dims[2], dims[3], rng)
}

pub fn init_transformer_block<R: Rng>(
    params: &mut ParameterSet,
    prefix: &str,
    dim: usize,
    rng: &mut R,
) -> Result<()> {
    init_norm(params, &format!("{prefix}.ln1"), dim)?;
    for proj in ["q", "k", "v", "o"] {
        init_dense(params, &format!("{prefix}.attn.{proj}"), dim, dim, rng)?;
    }
    init_norm(params, &format!("{prefix}.ln2"), dim)?;
    init_dense(params, &format!("{prefix}.mlp.fc"), dim, MLP_RATIO * dim, rng)?;
    init_dense(params, &format!("{prefix}.mlp.proj"), MLP_RATIO * dim, dim, rng)
}

// Tensor-level entry points. Each records a throwaway graph and returns the
// forward value.

/// Elementwise tanh-approximation GELU.
pub fn gelu(x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let v = g.input(x.clone());
    let y = g.gelu(v)?;
    g.value(y).clone().reshape(x.shape().to_vec())
}

/// `x·W + b` with `x` as `rows × in`, `W` as `in × out`, `b` as `out`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.cols() != w.rows() || w.shape().len() != 2 {
        return Err(NumericsError::Shape(format!(
            "linear: input {:?} does not match weight {:?}",
            x.shape(),
            w.shape()
        )));
    }
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let wv = g.input(w.clone());
    let bv = g.input(b.clone());
    let y = g.matmul(xv, wv)?;
    let y = g.add_bias(y, bv)?;
    Ok(g.value(y).clone())
}

pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let gv = g.input(gain.clone());
    let bv = g.input(bias.clone());
    let y = g.layer_norm(xv, gv, bv)?;
    g.value(y).clone().reshape(x.shape().to_vec())
}

/// Runs one pre-norm block over `tokens` (`sequence × dim`).
pub fn attention_block(
    tokens: &Tensor,
    params: &ParameterSet,
    prefix: &str,
    heads: usize,
    causal: bool,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.input(tokens.clone());
    let y = transformer_block(&mut g, x, params, prefix, heads, causal)?;
    Ok(g.value(y).clone())
}
