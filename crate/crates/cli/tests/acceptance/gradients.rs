//! Finite-difference checks of every tape operation, the layer blocks, the
//! loss graphs and the end-to-end training objective. Every configured
//! width is at most 8; transformer blocks widen 4x inside their MLP.

use std::time::Instant;

use eventcast_core::model::{
    self, forward_graph, time_loss_graph, total_loss_graph, triplet_loss_graph, Distance, Mode, ModelConfig, SeriesInput,
    TextInput,
};
use eventcast_numerics::gradcheck::check_gradients;
use eventcast_numerics::layers::{self, init_dense, init_mlp3, init_norm, init_transformer_block};
use eventcast_numerics::{Graph, NumericsError, ParameterSet, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

const INSTANCES: u64 = 100;
const STEP: f64 = 1e-4;
const TOL: f64 = 1e-4;
const BUDGET_SECS: f64 = 60.0;
/// Distance kept between any kink (abs, relu, hinge) and its argument.
const CLEARANCE: f64 = 1e-2;
const E2E_COORDS: usize = 2;

type Loss = Box<dyn Fn(&mut Graph, &ParameterSet) -> Result<Var>>;
type Case = fn(&mut ChaCha8Rng) -> (ParameterSet, Loss);

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Magnitudes in [0.1, 2] with random signs.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..2.0);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn ext(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(1..=8)
}

fn set(entries: Vec<(&str, Tensor)>) -> ParameterSet {
    let mut p = ParameterSet::new();
    for (name, t) in entries {
        p.insert(name, t, true).unwrap();
    }
    p
}

/// `sum(y ⊙ w)` for a fixed random `w`, so every output coordinate reaches
/// the scalar with its own weight.
fn reduce(g: &mut Graph, y: Var, w: &Tensor) -> Result<Var> {
    let wv = g.input(w.clone());
    let m = g.mul(y, wv)?;
    Ok(g.sum(m))
}

fn weights_like(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    uniform(rng, &[rows, cols], -1.0, 1.0)
}

macro_rules! unary {
    ($name:ident, $draw:expr, |$g:ident, $x:ident| $body:expr) => {
        fn $name(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
            let (r, c) = (ext(rng), ext(rng));
            let draw: fn(&mut ChaCha8Rng, &[usize]) -> Tensor = $draw;
            let p = set(vec![("x", draw(rng, &[r, c]))]);
            let w = weights_like(rng, r, c);
            (
                p,
                Box::new(move |$g, p| {
                    let $x = $g.param(p, "x")?;
                    let y = $body?;
                    reduce($g, y, &w)
                }),
            )
        }
    };
}

macro_rules! binary {
    ($name:ident, $draw_b:expr, |$g:ident, $a:ident, $b:ident| $body:expr) => {
        fn $name(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
            let (r, c) = (ext(rng), ext(rng));
            let draw_b: fn(&mut ChaCha8Rng, &[usize]) -> Tensor = $draw_b;
            let a = uniform(rng, &[r, c], -2.0, 2.0);
            let p = set(vec![("a", a), ("b", draw_b(rng, &[r, c]))]);
            let w = weights_like(rng, r, c);
            (
                p,
                Box::new(move |$g, p| {
                    let $a = $g.param(p, "a")?;
                    let $b = $g.param(p, "b")?;
                    let y = $body?;
                    reduce($g, y, &w)
                }),
            )
        }
    };
}

fn wide(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    uniform(rng, shape, -3.0, 3.0)
}

fn positive(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    uniform(rng, shape, 0.5, 3.0)
}

fn ok(v: Var) -> Result<Var> {
    Ok(v)
}

binary!(op_add, wide, |g, a, b| g.add(a, b));
binary!(op_sub, wide, |g, a, b| g.sub(a, b));
binary!(op_mul, wide, |g, a, b| g.mul(a, b));
binary!(op_div, off_zero, |g, a, b| g.div(a, b));
unary!(op_gelu, wide, |g, x| g.gelu(x));
unary!(op_abs, off_zero, |g, x| ok(g.abs(x)));
unary!(op_relu, off_zero, |g, x| ok(g.relu(x)));
unary!(op_square, wide, |g, x| ok(g.square(x)));
unary!(op_sqrt, positive, |g, x| g.sqrt(x));
unary!(op_scale, wide, |g, x| {
    let y = g.scale(x, -1.7);
    ok(g.square(y))
});
unary!(op_add_scalar, wide, |g, x| {
    let y = g.add_scalar(x, 0.6);
    ok(g.square(y))
});
unary!(op_softmax, wide, |g, x| ok(g.softmax(x, false)));
unary!(op_softmax_causal, wide, |g, x| ok(g.softmax(x, true)));

fn op_matmul(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (n, k, m) = (ext(rng), ext(rng), ext(rng));
    let p = set(vec![("a", uniform(rng, &[n, k], -1.0, 1.0)), ("b", uniform(rng, &[k, m], -1.0, 1.0))]);
    let w = weights_like(rng, n, m);
    (p, Box::new(move |g, p| {
        let (a, b) = (g.param(p, "a")?, g.param(p, "b")?);
        let y = g.matmul(a, b)?;
        reduce(g, y, &w)
    }))
}

fn op_add_bias(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (r, c) = (ext(rng), ext(rng));
    let p = set(vec![("x", uniform(rng, &[r, c], -1.0, 1.0)), ("b", uniform(rng, &[c], -1.0, 1.0))]);
    let w = weights_like(rng, r, c);
    (p, Box::new(move |g, p| {
        let (x, b) = (g.param(p, "x")?, g.param(p, "b")?);
        let y = g.add_bias(x, b)?;
        let y = g.square(y);
        reduce(g, y, &w)
    }))
}

fn op_layer_norm(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (r, c) = (ext(rng), rng.gen_range(2..=8));
    let p = set(vec![
        ("x", uniform(rng, &[r, c], -2.0, 2.0)),
        ("gain", uniform(rng, &[c], -1.5, 1.5)),
        ("bias", uniform(rng, &[c], -1.0, 1.0)),
    ]);
    let w = weights_like(rng, r, c);
    (p, Box::new(move |g, p| {
        let (x, gain, bias) = (g.param(p, "x")?, g.param(p, "gain")?, g.param(p, "bias")?);
        let y = g.layer_norm(x, gain, bias)?;
        reduce(g, y, &w)
    }))
}

fn op_transpose(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (r, c) = (ext(rng), ext(rng));
    let p = set(vec![("x", uniform(rng, &[r, c], -2.0, 2.0))]);
    let w = weights_like(rng, c, r);
    (p, Box::new(move |g, p| {
        let x = g.param(p, "x")?;
        let y = g.transpose(x);
        let y = g.square(y);
        reduce(g, y, &w)
    }))
}

fn op_slice_cols(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (r, c) = (ext(rng), ext(rng));
    let start = rng.gen_range(0..c);
    let len = rng.gen_range(1..=c - start);
    let p = set(vec![("x", uniform(rng, &[r, c], -2.0, 2.0))]);
    let w = weights_like(rng, r, len);
    (p, Box::new(move |g, p| {
        let x = g.param(p, "x")?;
        let y = g.slice_cols(x, start, len)?;
        let y = g.square(y);
        reduce(g, y, &w)
    }))
}

fn op_concat_cols(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let r = ext(rng);
    let widths = [rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=2)];
    let p = set(vec![
        ("a", uniform(rng, &[r, widths[0]], -2.0, 2.0)),
        ("b", uniform(rng, &[r, widths[1]], -2.0, 2.0)),
        ("c", uniform(rng, &[r, widths[2]], -2.0, 2.0)),
    ]);
    let w = weights_like(rng, r, widths.iter().sum());
    (p, Box::new(move |g, p| {
        let parts = [g.param(p, "a")?, g.param(p, "b")?, g.param(p, "c")?];
        let y = g.concat_cols(&parts)?;
        let y = g.square(y);
        reduce(g, y, &w)
    }))
}

fn op_reshape(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (r, c) = (rng.gen_range(1..=4), rng.gen_range(1..=2));
    let p = set(vec![("x", uniform(rng, &[r, c], -2.0, 2.0))]);
    let w = weights_like(rng, c, r);
    (p, Box::new(move |g, p| {
        let x = g.param(p, "x")?;
        let y = g.reshape(x, c, r)?;
        let y = g.square(y);
        reduce(g, y, &w)
    }))
}

fn op_mean_rows(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (r, c) = (ext(rng), ext(rng));
    let p = set(vec![("x", uniform(rng, &[r, c], -2.0, 2.0))]);
    let w = weights_like(rng, 1, c);
    (p, Box::new(move |g, p| {
        let x = g.param(p, "x")?;
        let y = g.mean_rows(x);
        let y = g.square(y);
        reduce(g, y, &w)
    }))
}

fn op_sum_mean(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (r, c) = (ext(rng), ext(rng));
    let p = set(vec![("x", uniform(rng, &[r, c], -2.0, 2.0))]);
    (p, Box::new(move |g, p| {
        let x = g.param(p, "x")?;
        let s = g.sum(x);
        let s = g.square(s);
        let m = g.mean(x);
        let m = g.square(m);
        let m = g.scale(m, 3.0);
        g.add(s, m)
    }))
}

fn op_gather(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (v, d, n) = (ext(rng), ext(rng), ext(rng));
    let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..v)).collect();
    let p = set(vec![("table", uniform(rng, &[v, d], -2.0, 2.0))]);
    let w = weights_like(rng, n, d);
    (p, Box::new(move |g, p| {
        let t = g.param(p, "table")?;
        let y = g.gather(t, &idx)?;
        let y = g.square(y);
        reduce(g, y, &w)
    }))
}

fn op_mask(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (r, c) = (ext(rng), ext(rng));
    let mask: Vec<f64> = (0..r * c).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect();
    let p = set(vec![("x", uniform(rng, &[r, c], -2.0, 2.0))]);
    let w = weights_like(rng, r, c);
    (p, Box::new(move |g, p| {
        let x = g.param(p, "x")?;
        let y = g.mask(x, mask.clone())?;
        let y = g.square(y);
        reduce(g, y, &w)
    }))
}

fn op_dropout(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (r, c) = (ext(rng), ext(rng));
    let seed: u64 = rng.gen();
    let p = set(vec![("x", uniform(rng, &[r, c], -2.0, 2.0))]);
    let w = weights_like(rng, r, c);
    (p, Box::new(move |g, p| {
        let x = g.param(p, "x")?;
        // Same mask on every evaluation.
        let mut drop = ChaCha8Rng::seed_from_u64(seed);
        let y = g.dropout(x, 0.3, &mut drop)?;
        let y = g.square(y);
        reduce(g, y, &w)
    }))
}

fn layer_dense(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (r, i, o) = (ext(rng), ext(rng), ext(rng));
    let mut p = set(vec![("x", uniform(rng, &[r, i], -1.0, 1.0))]);
    init_dense(&mut p, "fc", i, o, rng).unwrap();
    p.set("fc.b", uniform(rng, &[o], -1.0, 1.0)).unwrap();
    let w = weights_like(rng, r, o);
    (p, Box::new(move |g, p| {
        let x = g.param(p, "x")?;
        let y = layers::dense(g, x, p, "fc")?;
        let y = g.gelu(y)?;
        reduce(g, y, &w)
    }))
}

fn layer_norm_block(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (r, c) = (ext(rng), rng.gen_range(2..=8));
    let mut p = set(vec![("x", uniform(rng, &[r, c], -2.0, 2.0))]);
    init_norm(&mut p, "ln", c).unwrap();
    p.set("ln.gain", uniform(rng, &[c], -1.5, 1.5)).unwrap();
    let w = weights_like(rng, r, c);
    (p, Box::new(move |g, p| {
        let x = g.param(p, "x")?;
        let y = layers::norm(g, x, p, "ln")?;
        reduce(g, y, &w)
    }))
}

fn layer_mlp3(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let r = ext(rng);
    let d = [ext(rng), ext(rng), ext(rng), ext(rng)];
    let mut p = set(vec![("x", uniform(rng, &[r, d[0]], -1.0, 1.0))]);
    init_mlp3(&mut p, "mlp", d, rng).unwrap();
    let w = weights_like(rng, r, d[3]);
    (p, Box::new(move |g, p| {
        let x = g.param(p, "x")?;
        let y = layers::mlp3(g, x, p, "mlp")?;
        reduce(g, y, &w)
    }))
}

fn block(rng: &mut ChaCha8Rng, causal: bool) -> (ParameterSet, Loss) {
    let dim = rng.gen_range(2..=8);
    let heads = if dim % 2 == 0 && rng.gen::<bool>() { 2 } else { 1 };
    let seq = ext(rng);
    let mut p = set(vec![("x", uniform(rng, &[seq, dim], -1.0, 1.0))]);
    init_transformer_block(&mut p, "blk", dim, rng).unwrap();
    for n in ["blk.ln1.gain", "blk.ln2.gain"] {
        p.set(n, uniform(rng, &[dim], -1.5, 1.5)).unwrap();
    }
    let w = weights_like(rng, seq, dim);
    (p, Box::new(move |g, p| {
        let x = g.param(p, "x")?;
        let y = layers::transformer_block(g, x, p, "blk", heads, causal)?;
        reduce(g, y, &w)
    }))
}

fn layer_block_causal(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    block(rng, true)
}

fn layer_block_bidirectional(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    block(rng, false)
}

fn core_err(e: eventcast_core::CoreError) -> NumericsError {
    match e {
        eventcast_core::CoreError::Numerics(n) => n,
        other => NumericsError::Contract(other.to_string()),
    }
}

fn loss_time(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let (d, len) = (rng.gen_range(1..=2), rng.gen_range(1..=4));
    let pred = uniform(rng, &[1, d * len], -2.0, 2.0);
    let offset = off_zero(rng, &[1, d * len]);
    let target: Vec<f64> = pred.data().iter().zip(offset.data()).map(|(p, o)| p + o).collect();
    let p = set(vec![("pred", pred), ("target", Tensor::matrix(1, d * len, target).unwrap())]);
    (p, Box::new(move |g, p| {
        let (a, b) = (g.param(p, "pred")?, g.param(p, "target")?);
        time_loss_graph(g, a, b).map_err(core_err)
    }))
}

fn distances(rng: &mut ChaCha8Rng, kind: Distance) -> (ParameterSet, Loss) {
    let n = ext(rng);
    let p = set(vec![("a", uniform(rng, &[1, n], -1.0, 1.0)), ("b", uniform(rng, &[1, n], -1.0, 1.0))]);
    (p, Box::new(move |g, p| {
        let (a, b) = (g.param(p, "a")?, g.param(p, "b")?);
        model::distance_graph(g, a, b, kind).map_err(core_err)
    }))
}

fn loss_euclidean(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    distances(rng, Distance::Euclidean)
}

fn loss_cosine(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    distances(rng, Distance::Cosine)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn loss_triplet_and_total(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let n = ext(rng);
    let k = rng.gen_range(1..=6);
    let margin = 1.0;
    // Redraw until every hinge argument is clear of zero.
    let (gt, t, cfs) = loop {
        let gt = uniform(rng, &[1, n], -1.5, 1.5);
        let t = uniform(rng, &[1, n], -1.5, 1.5);
        let cfs: Vec<Tensor> = (0..k).map(|_| uniform(rng, &[1, n], -1.5, 1.5)).collect();
        let d_gt = euclid(gt.data(), t.data());
        if cfs.iter().all(|c| (d_gt - euclid(c.data(), t.data()) + margin).abs() > CLEARANCE) {
            break (gt, t, cfs);
        }
    };
    let pred = uniform(rng, &[1, 3], -1.0, 1.0);
    let target: Vec<f64> = pred.data().iter().map(|p| p + 0.5).collect();
    let names: Vec<String> = (0..k).map(|i| format!("cf{i}")).collect();
    let target = Tensor::matrix(1, 3, target).unwrap();
    let mut p = set(vec![("gt", gt), ("t", t), ("pred", pred)]);
    for (name, c) in names.iter().zip(cfs) {
        p.insert(name, c, true).unwrap();
    }
    (p, Box::new(move |g, p| {
        let (gv, tv) = (g.param(p, "gt")?, g.param(p, "t")?);
        let cv: Vec<Var> = names.iter().map(|n| g.param(p, n)).collect::<Result<_>>()?;
        let causal = triplet_loss_graph(g, gv, &cv, tv, margin, Distance::Euclidean).map_err(core_err)?;
        let pred = g.param(p, "pred")?;
        let y = g.input(target.clone());
        let time = time_loss_graph(g, pred, y).map_err(core_err)?;
        total_loss_graph(g, time, Some(causal), 1.0, 1.0).map_err(core_err)
    }))
}

/// Every configurable width at most 8.
pub fn small_config(distance: Distance) -> ModelConfig {
    ModelConfig {
        vocab_size: 8,
        max_text_tokens: 6,
        text_embed_dim: 4,
        text_layers: 2,
        text_heads: 2,
        text_proj_hidden: 8,
        series_embed_dim: 4,
        series_layers: 2,
        series_heads: 2,
        patch_len: 2,
        max_patches: 4,
        residual_hidden: 8,
        fusion_hidden: 8,
        decoder_tokens: 2,
        decoder_layers: 2,
        decoder_heads: 2,
        regressor_layers: 2,
        regressor_hidden: 8,
        dropout: 0.2,
        distance,
        d: 1,
        input_len: 8,
        pred_len: 8,
        ..ModelConfig::desk()
    }
}

/// The training objective on one sample: forward in training mode (fixed
/// dropout masks), `L_Time` against the target and the triplet term over
/// three counterfactual texts.
fn end_to_end(rng: &mut ChaCha8Rng, seed: u64) -> (ParameterSet, Loss) {
    let distance = if seed % 2 == 0 { Distance::Euclidean } else { Distance::Cosine };
    let cfg = small_config(distance);
    let mut params = model::init_params(&cfg, rng.gen()).unwrap();
    // Move norms and biases off their constant initial values.
    let names: Vec<String> = params
        .names()
        .filter(|n| n.ends_with(".gain") || n.ends_with(".bias") || n.ends_with(".b"))
        .map(String::from)
        .collect();
    for n in names {
        let shape = params.get(&n).unwrap().shape().to_vec();
        let base = if n.ends_with(".gain") { 1.0 } else { 0.0 };
        let t = uniform(rng, &shape, base - 0.5, base + 0.5);
        params.set(&n, t).unwrap();
    }
    let tokens = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let n = rng.gen_range(1..=cfg.max_text_tokens);
        (0..n).map(|_| rng.gen_range(0..cfg.vocab_size)).collect()
    };
    let text = tokens(rng);
    let negatives: Vec<Vec<usize>> = (0..3).map(|_| tokens(rng)).collect();
    let window = uniform(rng, &[cfg.input_len, cfg.d], -2.0, 2.0);
    let drop_seed: u64 = rng.gen();

    let build = {
        let cfg = cfg.clone();
        move |g: &mut Graph, p: &ParameterSet, target: Option<&Tensor>| -> eventcast_core::Result<(Var, Vec<f64>)> {
            let mut drop = ChaCha8Rng::seed_from_u64(drop_seed);
            let mut mode = Mode::Train(&mut drop);
            let vars = forward_graph(g, p, &cfg, TextInput::Tokens(&text), SeriesInput::Window(&window), true, &mut mode)?;
            let pred = g.value(vars.prediction).data().to_vec();
            let Some(target) = target else { return Ok((vars.prediction, pred)) };
            let y = g.input(target.clone());
            let time = time_loss_graph(g, vars.prediction, y)?;
            let cfs: Vec<Var> = negatives
                .iter()
                .map(|n| model::encode_text_graph(g, p, &cfg, TextInput::Tokens(n)))
                .collect::<eventcast_core::Result<_>>()?;
            let gt = vars.text.expect("text requested");
            let causal = triplet_loss_graph(g, gt, &cfs, vars.series, cfg.margin, cfg.distance)?;
            Ok((total_loss_graph(g, time, Some(causal), cfg.time_weight, cfg.causal_weight)?, pred))
        }
    };
    // Target offset from the prediction so the L1 term is smooth here.
    let (_, pred) = build(&mut Graph::new(), &params, None).unwrap();
    let offset = off_zero(rng, &[1, pred.len()]);
    let target = Tensor::matrix(1, pred.len(), pred.iter().zip(offset.data()).map(|(p, o)| p + o).collect()).unwrap();
    // Parameters off this path (the pretraining head) carry no gradient.
    let mut g = Graph::new();
    let (loss, _) = build(&mut g, &params, Some(&target)).unwrap();
    let grads = g.backward(loss).unwrap();
    let unused: Vec<String> = params.names().filter(|n| grads.get(*n).is_none()).map(String::from).collect();
    for n in unused {
        params.set_trainable(&n, false).unwrap();
    }
    (params, Box::new(move |g, p| build(g, p, Some(&target)).map(|(v, _)| v).map_err(core_err)))
}

const CASES: [(&str, Case); 35] = [
    ("matmul", op_matmul),
    ("add_bias", op_add_bias),
    ("add", op_add),
    ("sub", op_sub),
    ("mul", op_mul),
    ("div", op_div),
    ("scale", op_scale),
    ("add_scalar", op_add_scalar),
    ("gelu", op_gelu),
    ("abs", op_abs),
    ("square", op_square),
    ("sqrt", op_sqrt),
    ("relu", op_relu),
    ("layer_norm", op_layer_norm),
    ("transpose", op_transpose),
    ("softmax", op_softmax),
    ("softmax_causal", op_softmax_causal),
    ("slice_cols", op_slice_cols),
    ("concat_cols", op_concat_cols),
    ("reshape", op_reshape),
    ("mean_rows", op_mean_rows),
    ("sum+mean", op_sum_mean),
    ("gather", op_gather),
    ("mask", op_mask),
    ("dropout", op_dropout),
    ("dense", layer_dense),
    ("norm", layer_norm_block),
    ("mlp3", layer_mlp3),
    ("block_causal", layer_block_causal),
    ("block_bidirectional", layer_block_bidirectional),
    ("time_loss", loss_time),
    ("euclidean", loss_euclidean),
    ("cosine", loss_cosine),
    ("triplet+total", loss_triplet_and_total),
    ("end_to_end", end_to_end_case),
];

fn end_to_end_case(rng: &mut ChaCha8Rng) -> (ParameterSet, Loss) {
    let seed = rng.gen();
    end_to_end(rng, seed)
}

pub fn criterion() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, "");
    let mut failures = Vec::new();
    for (name, case) in CASES {
        for seed in 0..INSTANCES {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (params, loss) = case(&mut rng);
            // The end-to-end graph is probed on a sample of coordinates per parameter.
            let coords = (name == "end_to_end").then_some(E2E_COORDS);
            match check_gradients(&params, STEP, coords, seed, |g, p| loss(g, p)) {
                Ok(r) => {
                    if r.max_rel_error > worst.0 {
                        worst = (r.max_rel_error, name);
                    }
                    if r.max_rel_error >= TOL {
                        failures.push(format!("{name} #{seed}: {:.2e} at {:?}", r.max_rel_error, r.worst));
                    }
                }
                Err(e) => failures.push(format!("{name} #{seed}: {e}")),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{} checks ({} cases x {INSTANCES}), worst relative error {:.2e} ({}) < {TOL:.0e}, {secs:.1} s < {BUDGET_SECS} s",
        CASES.len() as u64 * INSTANCES,
        CASES.len(),
        worst.0,
        worst.1
    );
    if !failures.is_empty() {
        return Outcome::fail(format!("{detail}; {} failing: {}", failures.len(), failures[..failures.len().min(3)].join("; ")));
    }
    Outcome::check(secs < BUDGET_SECS, detail)
}
