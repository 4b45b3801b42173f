//! Plain-loop reference implementations used as oracles. Nothing here goes
//! through the tape.
#![allow(dead_code)]

pub mod data;

use eventcast_core::model::ModelConfig;
use eventcast_numerics::ParameterSet;

pub type Mat = Vec<Vec<f64>>;

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 16,
        max_text_tokens: 6,
        text_embed_dim: 4,
        text_layers: 2,
        text_heads: 2,
        text_proj_hidden: 8,
        series_embed_dim: 4,
        series_layers: 2,
        series_heads: 2,
        patch_len: 2,
        max_patches: 3,
        residual_hidden: 8,
        fusion_hidden: 8,
        decoder_tokens: 2,
        decoder_layers: 1,
        decoder_heads: 2,
        regressor_layers: 2,
        regressor_hidden: 8,
        dropout: 0.1,
        margin: 1.0,
        d: 1,
        input_len: 4,
        pred_len: 4,
        ..ModelConfig::desk()
    }
}

pub fn p(params: &ParameterSet, name: &str) -> Vec<f64> {
    params.get(name).unwrap().data().to_vec()
}

pub fn mm(a: &Mat, w: &[f64], cols: usize) -> Mat {
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| row.iter().enumerate().map(|(k, x)| x * w[k * cols + j]).sum())
                .collect()
        })
        .collect()
}

pub fn dense(params: &ParameterSet, prefix: &str, x: &Mat) -> Mat {
    let b = p(params, &format!("{prefix}.b"));
    let mut y = mm(x, &p(params, &format!("{prefix}.w")), b.len());
    for row in &mut y {
        for (v, bb) in row.iter_mut().zip(&b) {
            *v += bb;
        }
    }
    y
}

pub fn gelu_s(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

pub fn gelu(x: &Mat) -> Mat {
    x.iter().map(|r| r.iter().map(|&v| gelu_s(v)).collect()).collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect())
        .collect()
}

pub fn norm(params: &ParameterSet, prefix: &str, x: &Mat) -> Mat {
    let gain = p(params, &format!("{prefix}.gain"));
    let bias = p(params, &format!("{prefix}.bias"));
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * gain[i] + bias[i])
                .collect()
        })
        .collect()
}

pub fn mlp3(params: &ParameterSet, prefix: &str, x: &Mat) -> Mat {
    let h = gelu(&dense(params, &format!("{prefix}.l1"), x));
    let h = gelu(&dense(params, &format!("{prefix}.l2"), &h));
    dense(params, &format!("{prefix}.l3"), &h)
}

pub fn attention(params: &ParameterSet, prefix: &str, x: &Mat, heads: usize, causal: bool) -> Mat {
    let q = dense(params, &format!("{prefix}.q"), x);
    let k = dense(params, &format!("{prefix}.k"), x);
    let v = dense(params, &format!("{prefix}.v"), x);
    let n = x.len();
    let dim = x[0].len();
    let hd = dim / heads;
    let mut merged = vec![vec![0.0; dim]; n];
    for h in 0..heads {
        let cols = h * hd..(h + 1) * hd;
        for i in 0..n {
            let visible = if causal { i + 1 } else { n };
            let scores: Vec<f64> = (0..visible)
                .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = exps.iter().sum();
            for c in cols.clone() {
                merged[i][c] = (0..visible).map(|j| exps[j] / z * v[j][c]).sum();
            }
        }
    }
    dense(params, &format!("{prefix}.o"), &merged)
}

pub fn block(params: &ParameterSet, prefix: &str, x: &Mat, heads: usize, causal: bool) -> Mat {
    let a = attention(params, &format!("{prefix}.attn"), &norm(params, &format!("{prefix}.ln1"), x), heads, causal);
    let h = add(x, &a);
    let m = gelu(&dense(params, &format!("{prefix}.mlp.fc"), &norm(params, &format!("{prefix}.ln2"), &h)));
    let m = dense(params, &format!("{prefix}.mlp.proj"), &m);
    add(&h, &m)
}

pub fn mean_rows(x: &Mat) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x[0].len()).map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n).collect()
}

pub fn rows_of(data: &[f64], cols: usize) -> Mat {
    data.chunks(cols).map(<[f64]>::to_vec).collect()
}

pub fn text(params: &ParameterSet, cfg: &ModelConfig, tokens: &[usize]) -> Vec<f64> {
    let de = cfg.text_embed_dim;
    let tok = p(params, "text_encoder.embed.tok");
    let mut x: Mat = tokens.iter().map(|&t| tok[t * de..(t + 1) * de].to_vec()).collect();
    if cfg.text_layers > 0 {
        let pos = rows_of(&p(params, "text_encoder.embed.pos"), de);
        x = add(&x, &pos[..tokens.len()].to_vec());
    }
    for i in 0..cfg.text_layers {
        x = block(params, &format!("text_encoder.block{i}"), &x, cfg.text_heads, false);
    }
    mean_rows(&mlp3(params, "text_proj", &x))
}

pub fn series_base(params: &ParameterSet, cfg: &ModelConfig, window: &[f64]) -> Vec<f64> {
    let ds = cfg.series_embed_dim;
    let patches = rows_of(window, cfg.patch_len * cfg.d);
    let mut x = dense(params, "series_encoder.patch", &patches);
    let pos = rows_of(&p(params, "series_encoder.pos"), ds);
    x = add(&x, &pos[..patches.len()].to_vec());
    for i in 0..cfg.series_layers {
        x = block(params, &format!("series_encoder.block{i}"), &x, cfg.series_heads, false);
    }
    mean_rows(&norm(params, "series_encoder.ln_f", &x))
}

pub fn series(params: &ParameterSet, cfg: &ModelConfig, window: &[f64]) -> Vec<f64> {
    let base = series_base(params, cfg, window);
    let r = mlp3(params, "residual", &vec![base.clone()]);
    base.iter().zip(&r[0]).map(|(a, b)| a + b).collect()
}

pub fn fuse(params: &ParameterSet, e: &[f64], z: &[f64]) -> Vec<f64> {
    let cat = vec![[e, z].concat()];
    let h = gelu(&dense(params, "fusion.f1", &cat));
    dense(params, "fusion.f2", &h).remove(0)
}

pub fn decode(params: &ParameterSet, cfg: &ModelConfig, fused: &[f64]) -> Vec<f64> {
    let td = cfg.fusion_hidden / cfg.decoder_tokens;
    let mut x = add(&rows_of(fused, td), &rows_of(&p(params, "decoder.embed.pos"), td));
    for i in 0..cfg.decoder_layers {
        x = block(params, &format!("decoder.block{i}"), &x, cfg.decoder_heads, true);
    }
    norm(params, "decoder.ln_f", &x).concat()
}

pub fn regress(params: &ParameterSet, cfg: &ModelConfig, h: &[f64]) -> Vec<f64> {
    let mut x = vec![h.to_vec()];
    for i in 0..cfg.regressor_layers {
        x = gelu(&dense(params, &format!("regressor.hidden{i}"), &x));
    }
    dense(params, "regressor.out", &x).remove(0)
}

pub fn forward(params: &ParameterSet, cfg: &ModelConfig, tokens: &[usize], window: &[f64]) -> Vec<f64> {
    let e = text(params, cfg, tokens);
    let z = series(params, cfg, window);
    regress(params, cfg, &decode(params, cfg, &fuse(params, &e, &z)))
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
