//! Stage two: joint training on aligned pairs with the causal loss.

use std::collections::HashMap;
use std::path::Path;

use eventcast_numerics::{Graph, Gradients, NumericsError, ParameterSet, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::{load_checkpoint, save_checkpoint, Best, TrainState};
use super::config::{FreezePolicy, TrainConfig};
use super::data::TrainingExample;
use super::history::HistoryRow;
use super::optimizer::{clip_global_norm, Adam};
use super::{derive_seed, mean_gradients};
use crate::error::{CoreError, Result};
use crate::market::DatasetSplit;
use crate::model::{
    encode_text_graph, forward_graph, series_base, text_prefix, time_loss_graph, total_loss_graph,
    triplet_loss_graph, Mode, ModelConfig, SeriesInput, TextInput, TextPrefix,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters of the best validation check, or the final parameters
    /// when there was no validation data.
    pub params: ParameterSet,
    pub history: Vec<HistoryRow>,
    pub best_epoch: Option<usize>,
    pub best_val: Option<f64>,
    pub steps: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub time: f64,
    pub causal: f64,
    pub total: f64,
}

/// Whether the causal term takes part under this configuration.
pub fn causal_active(cfg: &ModelConfig, tc: &TrainConfig) -> bool {
    cfg.ablation.causal && tc.negatives != Some(0)
}

/// Frozen-activation caches. Valid while the frozen parameters they were
/// computed from do not change, which holds for one training run.
struct Caches {
    text_depth: Option<usize>,
    text: HashMap<Vec<usize>, TextPrefix>,
    series: HashMap<String, Tensor>,
}

fn frozen_under(params: &ParameterSet, prefix: &str) -> bool {
    let mut any = false;
    for (_, _, trainable) in params.iter().filter(|(n, _, _)| n.starts_with(prefix)) {
        if trainable {
            return false;
        }
        any = true;
    }
    any
}

impl Caches {
    fn build(params: &ParameterSet, cfg: &ModelConfig, examples: &[&TrainingExample], with_negatives: bool) -> Result<Self> {
        let text_depth = if frozen_under(params, "text_encoder.embed.") {
            Some(
                (0..cfg.text_layers)
                    .take_while(|i| frozen_under(params, &format!("text_encoder.block{i}.")))
                    .count(),
            )
        } else {
            None
        };
        let mut text = HashMap::new();
        if let Some(depth) = text_depth {
            let mut seqs: Vec<&Vec<usize>> = Vec::new();
            for ex in examples {
                seqs.push(&ex.tokens);
                if with_negatives {
                    if let Some(n) = &ex.negatives {
                        seqs.extend(n.iter());
                    }
                }
            }
            seqs.sort();
            seqs.dedup();
            let prefixes: Vec<TextPrefix> = seqs
                .par_iter()
                .map(|s| text_prefix(params, cfg, s, depth))
                .collect::<Result<_>>()?;
            text = seqs.into_iter().cloned().zip(prefixes).collect();
        }
        let mut series = HashMap::new();
        if frozen_under(params, "series_encoder.") {
            let bases: Vec<Tensor> = examples
                .par_iter()
                .map(|ex| series_base(params, cfg, &ex.window))
                .collect::<Result<_>>()?;
            series = examples.iter().map(|ex| ex.key.clone()).zip(bases).collect();
        }
        Ok(Self {
            text_depth,
            text,
            series,
        })
    }

    fn text<'a>(&'a self, tokens: &'a [usize]) -> TextInput<'a> {
        match self.text.get(tokens) {
            Some(p) if self.text_depth.is_some() => TextInput::Cached(p),
            _ => TextInput::Tokens(tokens),
        }
    }

    fn series<'a>(&'a self, ex: &'a TrainingExample) -> SeriesInput<'a> {
        match self.series.get(&ex.key) {
            Some(b) => SeriesInput::Cached(b),
            None => SeriesInput::Window(&ex.window),
        }
    }
}

struct Run<'a> {
    cfg: &'a ModelConfig,
    tc: &'a TrainConfig,
    freeze: &'a FreezePolicy,
    caches: Caches,
    causal: bool,
    total_steps: usize,
}

impl Run<'_> {
    fn negatives_used(&self, ex: &TrainingExample) -> Result<usize> {
        let have = ex.negatives.as_ref().map(Vec::len).unwrap_or(0);
        if have == 0 {
            return Err(CoreError::Data(format!("sample {} has no counterfactual set", ex.key)));
        }
        Ok(self.tc.negatives.map_or(have, |n| n.min(have)))
    }

    /// Loss terms and gradients of one example in training mode.
    fn example(&self, params: &ParameterSet, ex: &TrainingExample, rng: &mut ChaCha8Rng) -> Result<(StepLosses, Gradients)> {
        let cfg = self.cfg;
        let mut g = Graph::new();
        let mut mode = Mode::Train(rng);
        let vars = forward_graph(
            &mut g,
            params,
            cfg,
            self.caches.text(&ex.tokens),
            self.caches.series(ex),
            self.causal,
            &mut mode,
        )?;
        let target = g.input(ex.target.clone().reshape(vec![1, cfg.output_len()])?);
        let time = time_loss_graph(&mut g, vars.prediction, target)?;
        let causal = if self.causal {
            let n = self.negatives_used(ex)?;
            let negs = ex.negatives.as_ref().expect("checked");
            let cfs: Vec<Var> = negs[..n]
                .iter()
                .map(|t| encode_text_graph(&mut g, params, cfg, self.caches.text(t)))
                .collect::<Result<_>>()?;
            let gt = vars.text.expect("text encoded when causal is on");
            Some(triplet_loss_graph(&mut g, gt, &cfs, vars.series, cfg.margin, cfg.distance)?)
        } else {
            None
        };
        let total = total_loss_graph(&mut g, time, causal, cfg.time_weight, cfg.causal_weight)?;
        let losses = StepLosses {
            time: g.value(time).item()?,
            causal: causal.map(|c| g.value(c).item()).transpose()?.unwrap_or(0.0),
            total: g.value(total).item()?,
        };
        Ok((losses, g.backward(total)?))
    }

    fn validation_loss(&self, params: &ParameterSet, examples: &[TrainingExample]) -> Result<f64> {
        let losses: Vec<f64> = examples
            .par_iter()
            .map(|ex| {
                let mut g = Graph::new();
                let vars = forward_graph(
                    &mut g,
                    params,
                    self.cfg,
                    self.caches.text(&ex.tokens),
                    self.caches.series(ex),
                    false,
                    &mut Mode::Eval,
                )?;
                let target = g.input(ex.target.clone().reshape(vec![1, self.cfg.output_len()])?);
                let l = time_loss_graph(&mut g, vars.prediction, target)?;
                Ok(g.value(l).item()?)
            })
            .collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    fn step(&self, state: &mut TrainState, batch: &[&TrainingExample]) -> Result<StepLosses> {
        let step = state.step + 1;
        let bs = self.tc.batch_size;
        let results: Vec<(StepLosses, Gradients)> = batch
            .par_iter()
            .enumerate()
            .map(|(slot, ex)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.tc.seed, "dropout", (step * bs + slot) as u64));
                self.example(&state.params, ex, &mut rng)
            })
            .collect::<Result<_>>()
            .map_err(|e| match e {
                CoreError::Numerics(n @ NumericsError::Domain(_)) => CoreError::Training {
                    step,
                    message: n.to_string(),
                },
                other => other,
            })?;
        let n = results.len() as f64;
        let mean = StepLosses {
            time: results.iter().map(|r| r.0.time).sum::<f64>() / n,
            causal: results.iter().map(|r| r.0.causal).sum::<f64>() / n,
            total: results.iter().map(|r| r.0.total).sum::<f64>() / n,
        };
        if !mean.total.is_finite() {
            return Err(CoreError::Training {
                step,
                message: "loss is not finite".into(),
            });
        }
        let mut grads = mean_gradients(results.into_iter().map(|r| r.1).collect());
        clip_global_norm(&mut grads, self.tc.clip_norm);
        state.adam.step(&mut state.params, &grads, &self.tc.rate_map_at(step, self.total_steps), self.freeze)?;
        state.step = step;
        Ok(mean)
    }
}

/// Trains the full model from `params`. The freeze policy is applied to a
/// copy of `params` first. With `checkpoint_dir`, the state is saved after
/// every epoch.
pub fn train_full(
    params: &ParameterSet,
    data: &DatasetSplit<TrainingExample>,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    freeze: &FreezePolicy,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut params = params.clone();
    freeze.apply(&mut params)?;
    let state = TrainState {
        params,
        adam: Adam::new(),
        epoch: 0,
        step: 0,
        best: None,
        bad_checks: 0,
        finished: false,
        history: Vec::new(),
    };
    run(state, data, cfg, tc, freeze, checkpoint_dir)
}

/// Continues a run from the state saved in `checkpoint_dir`.
pub fn resume_full(
    checkpoint_dir: &Path,
    data: &DatasetSplit<TrainingExample>,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    freeze: &FreezePolicy,
) -> Result<TrainOutcome> {
    let state = load_checkpoint(checkpoint_dir)?;
    run(state, data, cfg, tc, freeze, Some(checkpoint_dir))
}

fn run(
    mut state: TrainState,
    data: &DatasetSplit<TrainingExample>,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    freeze: &FreezePolicy,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tc.validate()?;
    if data.train.is_empty() {
        return Err(CoreError::Data("no training samples".into()));
    }
    let causal = causal_active(cfg, tc);
    if causal {
        if let Some(ex) = data.train.iter().find(|e| e.negatives.as_ref().map_or(true, Vec::is_empty)) {
            return Err(CoreError::Data(format!("missing counterfactual set for sample {}", ex.key)));
        }
    }
    let all: Vec<&TrainingExample> = data.train.iter().chain(&data.validation).collect();
    let caches = Caches::build(&state.params, cfg, &all, causal)?;
    let run = Run {
        cfg,
        tc,
        freeze,
        caches,
        causal,
        total_steps: tc.total_steps(data.train.len()),
    };
    let mut stopped_early = false;
    while !state.finished && state.epoch < tc.epochs {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, "order", epoch as u64)));
        let mut hit_limit = false;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &data.train[i]).collect();
            let l = run.step(&mut state, &batch)?;
            state.history.push(HistoryRow {
                step: state.step,
                epoch: epoch + 1,
                train_l_time: l.time,
                l_causal: l.causal,
                l_total: l.total,
                val_l_time: None,
            });
            log::debug!("step {} L_time {:.6} L_causal {:.6}", state.step, l.time, l.causal);
            if tc.max_steps.is_some_and(|m| state.step >= m) {
                hit_limit = true;
                break;
            }
        }
        state.epoch = epoch + 1;
        if !data.validation.is_empty() {
            let val = run.validation_loss(&state.params, &data.validation)?;
            if let Some(last) = state.history.last_mut() {
                last.val_l_time = Some(val);
            }
            if state.best.as_ref().map_or(true, |b| val < b.val_loss) {
                state.best = Some(Best {
                    val_loss: val,
                    epoch: state.epoch,
                    params: state.params.clone(),
                });
                state.bad_checks = 0;
            } else {
                state.bad_checks += 1;
                if state.bad_checks >= tc.patience {
                    stopped_early = true;
                    state.finished = true;
                }
            }
        }
        if hit_limit {
            state.finished = true;
        }
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(&state, dir)?;
        }
    }
    let (params, best_epoch, best_val) = match state.best {
        Some(b) => (b.params, Some(b.epoch), Some(b.val_loss)),
        None => (state.params, None, None),
    };
    Ok(TrainOutcome {
        params,
        history: state.history,
        best_epoch,
        best_val,
        steps: state.step,
        stopped_early,
    })
}

/// Mean `L_Time` of `examples` in evaluation mode.
pub fn eval_time_loss(params: &ParameterSet, cfg: &ModelConfig, examples: &[TrainingExample]) -> Result<f64> {
    let run = Run {
        cfg,
        tc: &TrainConfig::default(),
        freeze: &FreezePolicy::none(),
        caches: Caches {
            text_depth: None,
            text: HashMap::new(),
            series: HashMap::new(),
        },
        causal: false,
        total_steps: 1,
    };
    if examples.is_empty() {
        return Err(CoreError::Data("no samples to evaluate".into()));
    }
    run.validation_loss(params, examples)
}
