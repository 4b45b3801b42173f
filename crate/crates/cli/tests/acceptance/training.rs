//! Criteria that train models: memorization, causal signal on planted
//! data, and the alpha-zero sweep point.

use std::collections::BTreeSet;
use std::time::Instant;

use eventcast_core::evaluation::{
    causal_margins, median, run_ablation, run_sensitivity, seeds_from, Knob, RunOptions,
};
use eventcast_core::market::{split_dataset, DatasetSplit};
use eventcast_core::model::{self, Ablation, ModelConfig};
use eventcast_core::synthetic::{planted_dataset, PlantedConfig};
use eventcast_core::training::{eval_time_loss, examples_from_corpus, train_full, FreezePolicy, TrainConfig, TrainingExample};

use crate::Outcome;

fn planted(days: usize, cfg: &ModelConfig) -> eventcast_core::Result<Vec<TrainingExample>> {
    let data = planted_dataset(&PlantedConfig { days, tau: cfg.input_len, ..PlantedConfig::default() })?;
    examples_from_corpus(&data.events, &data.records, &data.samples, 10, cfg)
}

pub fn overfit() -> Outcome {
    let run = || -> eventcast_core::Result<Outcome> {
        // Memorization is measured without dropout noise.
        let cfg = ModelConfig { dropout: 0.0, ..ModelConfig::desk().with_tau(35) };
        let data = planted_dataset(&PlantedConfig { days: 3, ..PlantedConfig::default() })?;
        let examples = examples_from_corpus(&data.events, &data.records, &data.samples, 10, &cfg)?;
        let level = |e: &TrainingExample| data.events.iter().find(|x| x.id == e.event_id).and_then(|x| x.sentiment);
        let mut seen = BTreeSet::new();
        let train: Vec<TrainingExample> = examples.into_iter().filter(|e| seen.insert(level(e))).take(8).collect();
        let tc = TrainConfig {
            epochs: 500,
            batch_size: 8,
            rate_scale: 2000.0,
            warmup_steps: 25,
            final_rate_fraction: 0.0,
            max_steps: Some(500),
            ..TrainConfig::desk()
        };
        let split = DatasetSplit { train: train.clone(), validation: Vec::new(), test: Vec::new() };
        let start = Instant::now();
        let params = model::init_params(&cfg, tc.seed)?;
        let outcome = train_full(&params, &split, &cfg, &tc, &FreezePolicy::standard(&cfg), None)?;
        let secs = start.elapsed().as_secs_f64();
        let loss = eval_time_loss(&outcome.params, &cfg, &train)?;
        Ok(Outcome::check(
            train.len() == 8 && loss < 1e-3 && outcome.steps <= 500 && secs < 120.0,
            format!("{} samples, train L_Time {loss:.2e} < 1e-3 after {} steps, {secs:.1} s < 120 s", train.len(), outcome.steps),
        ))
    };
    run().unwrap_or_else(|e| Outcome::fail(e.to_string()))
}

pub fn causal_signal() -> Outcome {
    let run = || -> eventcast_core::Result<Outcome> {
        let cfg = ModelConfig::desk().with_tau(35);
        let split = split_dataset(planted(C10_DAYS, &cfg)?)?;
        let tc = TrainConfig { epochs: C10_EPOCHS, patience: C10_EPOCHS, ..TrainConfig::desk() };
        let seeds = seeds_from(0, 5);
        let off = Ablation { causal: false, ..Ablation::FULL };
        let out = run_ablation(&cfg, &tc, &[Ablation::FULL, off], &split, &seeds, &RunOptions::default())?;
        let mse = |label: &str| out.report.rows.iter().find(|r| r.variant == label).map(|r| r.mse).unwrap_or(f64::NAN);
        let (full, causal_off) = (mse(&Ablation::FULL.label()), mse(&off.label()));
        let mut fractions = Vec::new();
        for run in out.runs.iter().filter(|r| r.variant == Ablation::FULL.label()) {
            let margins = causal_margins(&run.outcome.params, &cfg, &split.test)?;
            fractions.push(margins.iter().filter(|m| m.separated()).count() as f64 / margins.len() as f64);
        }
        let separated = median(&fractions);
        let per_seed: Vec<String> = fractions.iter().map(|f| format!("{f:.2}")).collect();
        Ok(Outcome::check(
            separated >= 0.9 && full < causal_off,
            format!(
                "{} held-out samples: median separated fraction {separated:.2} >= 0.90 (per seed {}); median test MSE full {full:.4} < causal-off {causal_off:.4}",
                split.test.len(),
                per_seed.join(" ")
            ),
        ))
    };
    run().unwrap_or_else(|e| Outcome::fail(e.to_string()))
}

/// 180 events, split 108/36/36. With fewer days some levels appear only
/// once or twice in training and held-out separation drops to 0.8-0.9.
const C10_DAYS: usize = 30;
const C10_EPOCHS: usize = 100;

pub fn alpha_zero() -> Outcome {
    let run = || -> eventcast_core::Result<Outcome> {
        let cfg = ModelConfig::desk().with_tau(35);
        let split = split_dataset(planted(5, &cfg)?)?;
        let tc = TrainConfig { epochs: 3, batch_size: 6, ..TrainConfig::desk() };
        let seeds = seeds_from(21, 2);
        let off = Ablation { causal: false, ..Ablation::FULL };
        let abl = run_ablation(&cfg, &tc, &[off], &split, &seeds, &RunOptions::default())?;
        let sweep = run_sensitivity(&cfg, &tc, &[0], &[cfg.regressor_layers], &split, &seeds, &RunOptions::default())?;
        let mut compared = 0;
        let mut differing = Vec::new();
        for run in &abl.runs {
            let point = sweep.runs.iter().find(|r| r.knob == Knob::Alpha && r.value == 0 && r.seed == run.seed);
            match point {
                Some(p) if p.history == run.outcome.history && !p.history.is_empty() => compared += p.history.len(),
                _ => differing.push(run.seed.to_string()),
            }
        }
        Ok(Outcome::check(
            differing.is_empty(),
            if differing.is_empty() {
                format!("alpha=0 history equals causal-off history row for row ({compared} rows over {} seeds)", seeds.len())
            } else {
                format!("histories differ for seeds {}", differing.join(", "))
            },
        ))
    };
    run().unwrap_or_else(|e| Outcome::fail(e.to_string()))
}
