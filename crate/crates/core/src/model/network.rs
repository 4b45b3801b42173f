//! Parameter layout and the forward pass.
//!
//! Parameter prefixes:
//!
//! | prefix | block |
//! |---|---|
//! | `text_encoder.embed.{tok,pos}`, `text_encoder.block{i}` | token embeddings and contextual blocks |
//! | `text_proj.l{1,2,3}` | per-token projection head |
//! | `series_encoder.{patch,pos,block{i},ln_f}` | patch encoder |
//! | `series_encoder.pretrain.{mask_token,recon}` | masked-reconstruction head |
//! | `residual.l{1,2,3}` | residual projection |
//! | `fusion.f{1,2}` or `fusion.resize` | fusion MLP, or the frozen resize of the fusion-off path |
//! | `decoder.embed.pos`, `decoder.block{i}`, `decoder.ln_f` | decoder stack |
//! | `regressor.hidden{i}`, `regressor.out` | post-regressor |
//!
//! Each parameter is drawn from its own generator seeded by the model seed
//! and the parameter's block prefix, so variants that add or drop blocks
//! share the initial values of every block they have in common.

use eventcast_numerics::{layers, Graph, NumericsError, ParameterSet, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::tokenizer::fnv1a;
use crate::error::{CoreError, Result};
use crate::market::NormalizedSample;

const EMBED_STD: f64 = 1.0;
const POSITION_STD: f64 = 0.1;

/// Dropout is drawn from the generator in training mode and skipped in
/// evaluation mode.
pub enum Mode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

fn block_rng(seed: u64, prefix: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(prefix.as_bytes()))
}

pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParameterSet> {
    cfg.validate()?;
    let mut p = ParameterSet::new();
    let rng = |prefix: &str| block_rng(seed, prefix);
    let de = cfg.text_embed_dim;
    let ds = cfg.series_embed_dim;
    let fh = cfg.fusion_hidden;

    p.init_normal("text_encoder.embed.tok", &[cfg.vocab_size, de], EMBED_STD, &mut rng("text_encoder.embed.tok"))?;
    if cfg.text_layers > 0 {
        p.init_normal("text_encoder.embed.pos", &[cfg.max_text_tokens, de], POSITION_STD, &mut rng("text_encoder.embed.pos"))?;
    }
    for i in 0..cfg.text_layers {
        let prefix = format!("text_encoder.block{i}");
        layers::init_transformer_block(&mut p, &prefix, de, &mut rng(&prefix))?;
    }
    let th = cfg.text_proj_hidden;
    layers::init_mlp3(&mut p, "text_proj", [de, th, th, de], &mut rng("text_proj"))?;

    let patch_in = cfg.patch_len * cfg.d;
    layers::init_dense(&mut p, "series_encoder.patch", patch_in, ds, &mut rng("series_encoder.patch"))?;
    p.init_normal("series_encoder.pos", &[cfg.max_patches, ds], POSITION_STD, &mut rng("series_encoder.pos"))?;
    for i in 0..cfg.series_layers {
        let prefix = format!("series_encoder.block{i}");
        layers::init_transformer_block(&mut p, &prefix, ds, &mut rng(&prefix))?;
    }
    layers::init_norm(&mut p, "series_encoder.ln_f", ds)?;
    p.init_normal("series_encoder.pretrain.mask_token", &[ds], POSITION_STD, &mut rng("series_encoder.pretrain.mask_token"))?;
    layers::init_dense(&mut p, "series_encoder.pretrain.recon", ds, patch_in, &mut rng("series_encoder.pretrain.recon"))?;
    let rh = cfg.residual_hidden;
    layers::init_mlp3(&mut p, "residual", [ds, rh, rh, ds], &mut rng("residual"))?;

    let ab = cfg.ablation;
    if ab.fusion {
        layers::init_dense(&mut p, "fusion.f1", de + ds, fh, &mut rng("fusion.f1"))?;
        layers::init_dense(&mut p, "fusion.f2", fh, fh, &mut rng("fusion.f2"))?;
    } else {
        layers::init_dense(&mut p, "fusion.resize", de + ds, fh, &mut rng("fusion.resize"))?;
        p.set_trainable_prefix("fusion.resize.", false);
    }

    if ab.decoder {
        let td = cfg.decoder_token_dim();
        p.init_normal("decoder.embed.pos", &[cfg.decoder_tokens, td], POSITION_STD, &mut rng("decoder.embed.pos"))?;
        for i in 0..cfg.decoder_layers {
            let prefix = format!("decoder.block{i}");
            layers::init_transformer_block(&mut p, &prefix, td, &mut rng(&prefix))?;
        }
        layers::init_norm(&mut p, "decoder.ln_f", td)?;
    }

    let mut width = fh;
    if ab.post_regressor {
        for i in 0..cfg.regressor_layers {
            let prefix = format!("regressor.hidden{i}");
            layers::init_dense(&mut p, &prefix, width, cfg.regressor_hidden, &mut rng(&prefix))?;
            width = cfg.regressor_hidden;
        }
    }
    layers::init_dense(&mut p, "regressor.out", width, cfg.output_len(), &mut rng("regressor.out"))?;
    Ok(p)
}

/// Contextual token states after the first `depth` text blocks, cached
/// while those blocks and the embeddings are frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct TextPrefix {
    pub depth: usize,
    pub states: Tensor,
}

pub enum TextInput<'a> {
    Tokens(&'a [usize]),
    Cached(&'a TextPrefix),
}

pub enum SeriesInput<'a> {
    /// Normalized window, `input_len × d` row-major.
    Window(&'a Tensor),
    /// Base encoder output 𝒳, cached while the series encoder is frozen.
    Cached(&'a Tensor),
}

fn check_tokens(tokens: &[usize], cfg: &ModelConfig) -> Result<()> {
    if tokens.is_empty() {
        return Err(CoreError::Input("empty token sequence".into()));
    }
    if tokens.len() > cfg.max_text_tokens {
        return Err(CoreError::Input(format!(
            "{} tokens exceed the maximum of {}",
            tokens.len(),
            cfg.max_text_tokens
        )));
    }
    if let Some(t) = tokens.iter().find(|&&t| t >= cfg.vocab_size) {
        return Err(CoreError::Input(format!("token id {t} outside vocabulary {}", cfg.vocab_size)));
    }
    Ok(())
}

fn text_states(g: &mut Graph, params: &ParameterSet, cfg: &ModelConfig, tokens: &[usize], depth: usize) -> Result<Var> {
    check_tokens(tokens, cfg)?;
    let table = g.param(params, "text_encoder.embed.tok")?;
    let mut x = g.gather(table, tokens)?;
    if cfg.text_layers > 0 {
        let pos = g.param(params, "text_encoder.embed.pos")?;
        let idx: Vec<usize> = (0..tokens.len()).collect();
        let pe = g.gather(pos, &idx)?;
        x = g.add(x, pe)?;
    }
    text_blocks(g, params, cfg, x, 0..depth)
}

fn text_blocks(
    g: &mut Graph,
    params: &ParameterSet,
    cfg: &ModelConfig,
    mut x: Var,
    range: std::ops::Range<usize>,
) -> Result<Var> {
    for i in range {
        x = layers::transformer_block(g, x, params, &format!("text_encoder.block{i}"), cfg.text_heads, false)?;
    }
    Ok(x)
}

/// Runs the embeddings and the first `depth` blocks outside any tape.
pub fn text_prefix(params: &ParameterSet, cfg: &ModelConfig, tokens: &[usize], depth: usize) -> Result<TextPrefix> {
    let depth = depth.min(cfg.text_layers);
    let mut g = Graph::new();
    let x = text_states(&mut g, params, cfg, tokens, depth)?;
    Ok(TextPrefix {
        depth,
        states: g.value(x).clone(),
    })
}

/// `E_i`: contextual encoder, per-token projection, mean pool. `1 × text_embed_dim`.
pub fn encode_text_graph(g: &mut Graph, params: &ParameterSet, cfg: &ModelConfig, input: TextInput) -> Result<Var> {
    let h = match input {
        TextInput::Tokens(tokens) => text_states(g, params, cfg, tokens, cfg.text_layers)?,
        TextInput::Cached(prefix) => {
            let x = g.input(prefix.states.clone());
            text_blocks(g, params, cfg, x, prefix.depth..cfg.text_layers)?
        }
    };
    let projected = layers::mlp3(g, h, params, "text_proj")?;
    Ok(g.mean_rows(projected))
}

fn window_matrix(window: &Tensor, cfg: &ModelConfig) -> Result<Tensor> {
    let expected = cfg.input_len * cfg.d;
    if window.len() != expected {
        return Err(NumericsError::Shape(format!(
            "window has {} values, config expects {} × {}",
            window.len(),
            cfg.input_len,
            cfg.d
        ))
        .into());
    }
    Ok(window.clone().reshape(vec![cfg.patches(), cfg.patch_len * cfg.d])?)
}

/// Patch tokens after the series blocks and final norm, `patches × series_embed_dim`.
/// Rows flagged in `masked` have their patch embedding replaced by the mask token.
pub fn series_tokens_graph(
    g: &mut Graph,
    params: &ParameterSet,
    cfg: &ModelConfig,
    window: &Tensor,
    masked: Option<&[bool]>,
) -> Result<Var> {
    let patches = window_matrix(window, cfg)?;
    let n = patches.rows();
    let x = g.input(patches);
    let mut h = layers::dense(g, x, params, "series_encoder.patch")?;
    if let Some(masked) = masked {
        let ds = cfg.series_embed_dim;
        let keep: Vec<f64> = masked
            .iter()
            .flat_map(|&m| std::iter::repeat(if m { 0.0 } else { 1.0 }).take(ds))
            .collect();
        let fill: Vec<f64> = keep.iter().map(|k| 1.0 - k).collect();
        let token = g.param(params, "series_encoder.pretrain.mask_token")?;
        let tokens = g.gather(token, &vec![0; n])?;
        let kept = g.mask(h, keep)?;
        let filled = g.mask(tokens, fill)?;
        h = g.add(kept, filled)?;
    }
    let pos = g.param(params, "series_encoder.pos")?;
    let idx: Vec<usize> = (0..n).collect();
    let pe = g.gather(pos, &idx)?;
    h = g.add(h, pe)?;
    for i in 0..cfg.series_layers {
        h = layers::transformer_block(g, h, params, &format!("series_encoder.block{i}"), cfg.series_heads, false)?;
    }
    Ok(layers::norm(g, h, params, "series_encoder.ln_f")?)
}

/// 𝒳_i: mean-pooled base encoder output, `1 × series_embed_dim`.
pub fn series_base_graph(g: &mut Graph, params: &ParameterSet, cfg: &ModelConfig, window: &Tensor) -> Result<Var> {
    let tokens = series_tokens_graph(g, params, cfg, window, None)?;
    Ok(g.mean_rows(tokens))
}

pub fn series_base(params: &ParameterSet, cfg: &ModelConfig, window: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let v = series_base_graph(&mut g, params, cfg, window)?;
    Ok(g.value(v).clone())
}

/// `Z_i = 𝒳_i + f_residual(𝒳_i)`.
pub fn encode_series_graph(g: &mut Graph, params: &ParameterSet, cfg: &ModelConfig, input: SeriesInput) -> Result<Var> {
    let base = match input {
        SeriesInput::Window(w) => series_base_graph(g, params, cfg, w)?,
        SeriesInput::Cached(x) => {
            if x.len() != cfg.series_embed_dim {
                return Err(NumericsError::Shape("cached series encoding has the wrong width".into()).into());
            }
            g.input(x.clone())
        }
    };
    let r = layers::mlp3(g, base, params, "residual")?;
    Ok(g.add(base, r)?)
}

fn check_width(g: &Graph, v: Var, width: usize, what: &str) -> Result<()> {
    let t = g.value(v);
    if t.len() != width {
        return Err(NumericsError::Shape(format!("{what} has width {}, expected {width}", t.len())).into());
    }
    Ok(())
}

/// `E_fused` from `[E ‖ Z]`, `1 × fusion_hidden`.
pub fn fuse_graph(g: &mut Graph, params: &ParameterSet, cfg: &ModelConfig, e: Var, z: Var) -> Result<Var> {
    check_width(g, e, cfg.text_embed_dim, "text vector")?;
    check_width(g, z, cfg.series_embed_dim, "series vector")?;
    let combined = g.concat_cols(&[e, z])?;
    if !cfg.ablation.fusion {
        return Ok(layers::dense(g, combined, params, "fusion.resize")?);
    }
    let h = layers::dense(g, combined, params, "fusion.f1")?;
    let h = g.gelu(h)?;
    Ok(layers::dense(g, h, params, "fusion.f2")?)
}

/// Reshape to `s` tokens, add the token embedding, run the causal blocks and
/// the final norm, flatten back. `1 × fusion_hidden`.
pub fn decode_graph(g: &mut Graph, params: &ParameterSet, cfg: &ModelConfig, fused: Var) -> Result<Var> {
    check_width(g, fused, cfg.fusion_hidden, "fused vector")?;
    let (s, td) = (cfg.decoder_tokens, cfg.decoder_token_dim());
    let tokens = g.reshape(fused, s, td)?;
    let pos = g.param(params, "decoder.embed.pos")?;
    let mut h = g.add(tokens, pos)?;
    for i in 0..cfg.decoder_layers {
        h = layers::transformer_block(g, h, params, &format!("decoder.block{i}"), cfg.decoder_heads, true)?;
    }
    let h = layers::norm(g, h, params, "decoder.ln_f")?;
    Ok(g.reshape(h, 1, cfg.fusion_hidden)?)
}

/// Hidden stack and output linear. `1 × (d · pred_len)`, channel-major.
pub fn regress_graph(g: &mut Graph, params: &ParameterSet, cfg: &ModelConfig, h: Var, mode: &mut Mode) -> Result<Var> {
    check_width(g, h, cfg.fusion_hidden, "decoder output")?;
    let mut x = h;
    if cfg.ablation.post_regressor {
        for i in 0..cfg.regressor_layers {
            x = layers::dense(g, x, params, &format!("regressor.hidden{i}"))?;
            x = g.gelu(x)?;
            if let Mode::Train(rng) = mode {
                x = g.dropout(x, cfg.dropout, *rng)?;
            }
        }
    }
    Ok(layers::dense(g, x, params, "regressor.out")?)
}

pub struct ForwardVars {
    pub prediction: Var,
    /// `E_i` (the textual encoding), when the text path or the causal loss needs it.
    pub text: Option<Var>,
    /// `Z_i`.
    pub series: Var,
}

/// Records the full pipeline on `g`. The text encoding is computed when the
/// textual path is on or `need_text` is set; with the textual path off a
/// zero vector enters the fusion.
pub fn forward_graph(
    g: &mut Graph,
    params: &ParameterSet,
    cfg: &ModelConfig,
    text: TextInput,
    series: SeriesInput,
    need_text: bool,
    mode: &mut Mode,
) -> Result<ForwardVars> {
    let ab = cfg.ablation;
    let z = encode_series_graph(g, params, cfg, series)?;
    let e = if ab.textual || need_text {
        Some(encode_text_graph(g, params, cfg, text)?)
    } else {
        None
    };
    let fusion_text = match (ab.textual, e) {
        (true, Some(e)) => e,
        _ => g.input(Tensor::zeros(&[1, cfg.text_embed_dim])),
    };
    let fused = fuse_graph(g, params, cfg, fusion_text, z)?;
    let h = if ab.decoder { decode_graph(g, params, cfg, fused)? } else { fused };
    let prediction = regress_graph(g, params, cfg, h, mode)?;
    Ok(ForwardVars { prediction, text: e, series: z })
}

/// Ŷ in normalized units and, when the sample's statistics are known, in
/// original units. Both `d × pred_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOutput {
    pub predictions: Tensor,
    pub denormalized: Option<Tensor>,
}

fn as_vector(t: &Tensor) -> Tensor {
    Tensor::vector(t.data().to_vec()).expect("non-empty")
}

pub fn encode_text(tokens: &[usize], params: &ParameterSet, cfg: &ModelConfig) -> Result<Tensor> {
    let mut g = Graph::new();
    let v = encode_text_graph(&mut g, params, cfg, TextInput::Tokens(tokens))?;
    Ok(as_vector(g.value(v)))
}

pub fn encode_series(window: &Tensor, params: &ParameterSet, cfg: &ModelConfig) -> Result<Tensor> {
    let mut g = Graph::new();
    let v = encode_series_graph(&mut g, params, cfg, SeriesInput::Window(window))?;
    Ok(as_vector(g.value(v)))
}

pub fn fuse(e: &Tensor, z: &Tensor, params: &ParameterSet, cfg: &ModelConfig) -> Result<Tensor> {
    let mut g = Graph::new();
    let (ev, zv) = (g.input(e.clone()), g.input(z.clone()));
    let v = fuse_graph(&mut g, params, cfg, ev, zv)?;
    Ok(as_vector(g.value(v)))
}

pub fn decode(fused: &Tensor, params: &ParameterSet, cfg: &ModelConfig) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.input(fused.clone());
    let v = decode_graph(&mut g, params, cfg, x)?;
    Ok(as_vector(g.value(v)))
}

fn to_output(t: &Tensor, cfg: &ModelConfig) -> Result<Tensor> {
    Ok(t.clone().reshape(vec![cfg.d, cfg.pred_len])?)
}

pub fn regress(h: &Tensor, params: &ParameterSet, cfg: &ModelConfig, mode: &mut Mode) -> Result<ForecastOutput> {
    let mut g = Graph::new();
    let x = g.input(h.clone());
    let v = regress_graph(&mut g, params, cfg, x, mode)?;
    Ok(ForecastOutput {
        predictions: to_output(g.value(v), cfg)?,
        denormalized: None,
    })
}

/// Eval-mode forecast from token ids and a normalized window.
pub fn forward(tokens: &[usize], window: &Tensor, params: &ParameterSet, cfg: &ModelConfig) -> Result<Tensor> {
    let mut g = Graph::new();
    let vars = forward_graph(
        &mut g,
        params,
        cfg,
        TextInput::Tokens(tokens),
        SeriesInput::Window(window),
        false,
        &mut Mode::Eval,
    )?;
    to_output(g.value(vars.prediction), cfg)
}

/// Eval-mode forecast for a normalized sample and its event text, with
/// predictions mapped back to original units.
pub fn forward_sample(sample: &NormalizedSample, text: &str, params: &ParameterSet, cfg: &ModelConfig) -> Result<ForecastOutput> {
    if sample.channel_count() != cfg.d || sample.tau != cfg.input_len {
        return Err(NumericsError::Shape(format!(
            "sample is {} × {}, config expects {} × {}",
            sample.tau,
            sample.channel_count(),
            cfg.input_len,
            cfg.d
        ))
        .into());
    }
    let tokens = super::tokenize(text, cfg.vocab_size, cfg.max_text_tokens);
    let window = Tensor::matrix(cfg.input_len, cfg.d, sample.input_row_major())?;
    let predictions = forward(&tokens, &window, params, cfg)?;
    let rows: Vec<Vec<f64>> = (0..cfg.pred_len)
        .map(|t| (0..cfg.d).map(|c| predictions.get2(c, t)).collect())
        .collect();
    let denorm = sample.denormalize(&rows);
    let channel_major: Vec<f64> = (0..cfg.d)
        .flat_map(|c| denorm.iter().map(move |r| r[c]))
        .collect();
    Ok(ForecastOutput {
        predictions,
        denormalized: Some(Tensor::matrix(cfg.d, cfg.pred_len, channel_major)?),
    })
}
