//! Stage one: masked patch reconstruction for the series encoder.

use eventcast_numerics::{layers, Graph, Gradients, NumericsError, ParameterSet, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{FreezePolicy, RateMap, TrainConfig};
use super::optimizer::{clip_global_norm, Adam};
use super::{derive_seed, mean_gradients};
use crate::error::{CoreError, Result};
use crate::model::{series_tokens_graph, ModelConfig};

/// Picks `round(ratio · patches)` distinct patches to mask.
pub fn random_mask(patches: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let count = ((ratio * patches as f64).round() as usize).min(patches);
    let mut idx: Vec<usize> = (0..patches).collect();
    idx.shuffle(rng);
    let mut mask = vec![false; patches];
    for &i in &idx[..count] {
        mask[i] = true;
    }
    mask
}

/// Masked-patch MSE of one window and its gradients. An empty mask has
/// loss 0 and no gradients.
pub fn masked_reconstruction(
    params: &ParameterSet,
    cfg: &ModelConfig,
    window: &Tensor,
    mask: &[bool],
    with_grads: bool,
) -> Result<(f64, Gradients)> {
    let masked: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if masked.is_empty() {
        return Ok((0.0, Gradients::new()));
    }
    let mut g = Graph::new();
    let tokens = series_tokens_graph(&mut g, params, cfg, window, Some(mask))?;
    let recon = layers::dense(&mut g, tokens, params, "series_encoder.pretrain.recon")?;
    let width = cfg.patch_len * cfg.d;
    let keep: Vec<f64> = mask
        .iter()
        .flat_map(|&m| std::iter::repeat(if m { 1.0 } else { 0.0 }).take(width))
        .collect();
    let target = g.input(window.clone().reshape(vec![mask.len(), width])?);
    let diff = g.sub(recon, target)?;
    let diff = g.mask(diff, keep)?;
    let sq = g.square(diff);
    let total = g.sum(sq);
    let loss = g.scale(total, 1.0 / (masked.len() * width) as f64);
    let value = g.value(loss).item()?;
    let grads = if with_grads { g.backward(loss)? } else { Gradients::new() };
    Ok((value, grads))
}

/// Mean masked MSE over `windows` with masks drawn from `seed`.
pub fn masked_mse(params: &ParameterSet, cfg: &ModelConfig, windows: &[Tensor], ratio: f64, seed: u64) -> Result<f64> {
    let losses: Vec<f64> = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "eval-mask", i as u64));
            let mask = random_mask(cfg.patches(), ratio, &mut rng);
            masked_reconstruction(params, cfg, w, &mask, false).map(|(l, _)| l)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / windows.len().max(1) as f64)
}

/// Trains `series_encoder.*` for `tc.pretrain_steps` steps of `tc.batch_size`
/// windows. Returns the parameters and the per-step batch loss. Trainable
/// flags are left as they were.
pub fn pretrain_series_encoder(
    params: &ParameterSet,
    windows: &[Tensor],
    cfg: &ModelConfig,
    tc: &TrainConfig,
) -> Result<(ParameterSet, Vec<f64>)> {
    tc.validate()?;
    if windows.len() < tc.batch_size {
        return Err(CoreError::Data(format!(
            "pretraining needs at least {} windows, got {}",
            tc.batch_size,
            windows.len()
        )));
    }
    let mut params = params.clone();
    let mut adam = Adam::new();
    let rates = RateMap::Uniform(tc.pretrain_rate);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u64;
    let mut history = Vec::with_capacity(tc.pretrain_steps);
    for step in 0..tc.pretrain_steps {
        let mut batch = Vec::with_capacity(tc.batch_size);
        while batch.len() < tc.batch_size {
            if cursor == order.len() {
                order = (0..windows.len()).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, "pretrain-order", epoch)));
                epoch += 1;
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let results: Vec<(f64, Gradients)> = batch
            .par_iter()
            .enumerate()
            .map(|(slot, &i)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, "pretrain-mask", (step * tc.batch_size + slot) as u64));
                let mask = random_mask(cfg.patches(), tc.mask_ratio, &mut rng);
                masked_reconstruction(&params, cfg, &windows[i], &mask, true)
            })
            .collect::<Result<_>>()
            .map_err(|e| match e {
                CoreError::Numerics(n @ NumericsError::Domain(_)) => CoreError::Training {
                    step: step + 1,
                    message: n.to_string(),
                },
                other => other,
            })?;
        let loss = results.iter().map(|r| r.0).sum::<f64>() / results.len() as f64;
        if !loss.is_finite() {
            return Err(CoreError::Training {
                step: step + 1,
                message: "pretraining loss is not finite".into(),
            });
        }
        let mut grads = mean_gradients(results.into_iter().map(|r| r.1).collect());
        clip_global_norm(&mut grads, tc.clip_norm);
        adam.step(&mut params, &grads, &rates, &FreezePolicy::none())?;
        history.push(loss);
    }
    Ok((params, history))
}
