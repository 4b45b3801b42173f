//! Sensitivity sweeps over the counterfactual sample count and the
//! post-regressor depth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ablation::{in_pool, train_and_score, RunOptions};
use crate::error::{CoreError, Result};
use crate::market::DatasetSplit;
use crate::model::ModelConfig;
use crate::training::{HistoryRow, TrainConfig, TrainingExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Knob {
    /// Counterfactual negatives per sample; 0 drops the causal term.
    Alpha,
    /// Post-regressor depth.
    K,
}

impl Knob {
    pub fn as_str(self) -> &'static str {
        match self {
            Knob::Alpha => "alpha",
            Knob::K => "k",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub knob: Knob,
    pub value: usize,
    pub seed: u64,
    pub asset_id: String,
    pub pred_len: usize,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub knob: Knob,
    pub value: usize,
    pub seed: u64,
    pub history: Vec<HistoryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub runs: Vec<SweepRun>,
}

/// One training run per grid point and seed; each knob is varied with the
/// other held at its configured value.
pub fn run_sensitivity(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    alphas: &[usize],
    ks: &[usize],
    data: &DatasetSplit<TrainingExample>,
    seeds: &[u64],
    opts: &RunOptions,
) -> Result<SweepOutcome> {
    if alphas.is_empty() || ks.is_empty() || seeds.is_empty() {
        return Err(CoreError::Config("sweep needs non-empty alpha, k and seed lists".into()));
    }
    if ks.contains(&0) {
        return Err(CoreError::Config("post-regressor depth must be at least 1".into()));
    }
    let points: Vec<(Knob, usize)> = alphas
        .iter()
        .map(|&a| (Knob::Alpha, a))
        .chain(ks.iter().map(|&k| (Knob::K, k)))
        .collect();
    let jobs: Vec<(Knob, usize, u64)> = points
        .iter()
        .flat_map(|&(knob, value)| seeds.iter().map(move |&s| (knob, value, s)))
        .collect();
    let results = in_pool(opts.workers, || {
        jobs.par_iter()
            .map(|&(knob, value, seed)| {
                let mut vcfg = cfg.clone();
                let mut vtc = TrainConfig { seed, ..tc.clone() };
                match knob {
                    Knob::Alpha => vtc.negatives = Some(value),
                    Knob::K => vcfg.regressor_layers = value,
                }
                let label = format!("{}={value}", knob.as_str());
                log::info!("sweep {label} seed {seed}");
                let (outcome, evaluation) = train_and_score(data, &vcfg, &vtc, &label, opts)?;
                let records: Vec<SweepRecord> = evaluation
                    .report
                    .rows
                    .iter()
                    .map(|r| SweepRecord {
                        knob,
                        value,
                        seed,
                        asset_id: r.asset_id.clone(),
                        pred_len: r.pred_len,
                        mse: r.mse,
                        mae: r.mae,
                    })
                    .collect();
                Ok((
                    records,
                    SweepRun {
                        knob,
                        value,
                        seed,
                        history: outcome.history,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut records = Vec::new();
    let mut runs = Vec::new();
    for (r, run) in results {
        records.extend(r);
        runs.push(run);
    }
    Ok(SweepOutcome { records, runs })
}
