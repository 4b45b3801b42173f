//! Forecast scoring, component and event-type ablations, sensitivity sweeps
//! and report output.

pub mod ablation;
pub mod output;
pub mod plot;
pub mod sweep;

pub use ablation::{
    median, run_ablation, run_event_type_ablation, seeds_from, AblationOutcome, AuditEntry, EventTypeReport,
    EventTypeRow, RunOptions, RunRecord, TrainedRun, FULL_SELECTION_LABEL,
};
pub use sweep::{run_sensitivity, Knob, SweepOutcome, SweepRecord, SweepRun};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use eventcast_numerics::ParameterSet;

use crate::error::{CoreError, Result};
use crate::model::{self, tokenizer::fnv1a, ModelConfig};
use crate::training::{TrainConfig, TrainingExample};

pub const PERSISTENCE_LABEL: &str = "Persistence";

/// Scale in which errors are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Per-sample z-scores of the pre-window.
    #[default]
    Normalized,
    Original,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub key: String,
    pub asset_id: String,
    pub pred_len: usize,
    pub variant: String,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub asset_id: String,
    pub pred_len: usize,
    pub variant: String,
    pub mse: f64,
    pub mae: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub seed: u64,
    /// Latest event time among the scored samples (RFC 3339). Wall-clock
    /// time is not recorded so reruns produce identical reports.
    pub timestamp: String,
    pub units: Units,
}

impl ReportMeta {
    pub fn new(cfg: &ModelConfig, tc: &TrainConfig, examples: &[TrainingExample], units: Units) -> Result<Self> {
        let timestamp = examples
            .iter()
            .map(|e| e.timestamp)
            .max()
            .map(|t| t.to_rfc3339())
            .unwrap_or_default();
        Ok(Self {
            config_hash: config_hash(cfg, tc)?,
            seed: tc.seed,
            timestamp,
            units,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    /// Appends `other`'s rows and re-sorts by asset and horizon, keeping
    /// variant order stable.
    pub fn merge(&mut self, other: EvaluationReport) {
        self.rows.extend(other.rows);
        self.rows.sort_by(|a, b| (&a.asset_id, a.pred_len).cmp(&(&b.asset_id, b.pred_len)));
    }

    pub fn row(&self, asset_id: &str, pred_len: usize, variant: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.asset_id == asset_id && r.pred_len == pred_len && r.variant == variant)
    }
}

/// An aggregated report together with the per-sample scores it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub samples: Vec<SampleScore>,
}

/// FNV-1a of the canonical JSON of both configurations, as 16 hex digits.
pub fn config_hash(cfg: &ModelConfig, tc: &TrainConfig) -> Result<String> {
    let json = serde_json::to_string(&(cfg, tc))?;
    Ok(format!("{:016x}", fnv1a(json.as_bytes())))
}

/// `(MSE, MAE)` of two equally long vectors.
pub fn errors(pred: &[f64], target: &[f64]) -> (f64, f64) {
    let n = pred.len().max(1) as f64;
    let (sq, abs) = pred.iter().zip(target).fold((0.0, 0.0), |(s, a), (p, y)| {
        let e = p - y;
        (s + e * e, a + e.abs())
    });
    (sq / n, abs / n)
}

/// Maps channel-major `d × len` values back to original units.
fn denormalize(values: &[f64], example: &TrainingExample) -> Vec<f64> {
    let len = values.len() / example.stats.len().max(1);
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let s = example.stats[i / len];
            v * s.std + s.mean
        })
        .collect()
}

fn score(example: &TrainingExample, pred: &[f64], variant: &str, units: Units) -> SampleScore {
    let target = example.target.data();
    let (mse, mae) = match units {
        Units::Normalized => errors(pred, target),
        Units::Original => errors(&denormalize(pred, example), &denormalize(target, example)),
    };
    SampleScore {
        key: example.key.clone(),
        asset_id: example.asset_id.clone(),
        pred_len: example.target.cols(),
        variant: variant.to_string(),
        mse,
        mae,
    }
}

/// Mean of per-sample scores for each `(asset, pred_len)`.
pub fn aggregate(samples: &[SampleScore], variant: &str) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(&str, usize), (f64, f64, usize)> = BTreeMap::new();
    for s in samples {
        let g = groups.entry((s.asset_id.as_str(), s.pred_len)).or_default();
        g.0 += s.mse;
        g.1 += s.mae;
        g.2 += 1;
    }
    groups
        .into_iter()
        .map(|((asset, pred_len), (mse, mae, n))| ReportRow {
            asset_id: asset.to_string(),
            pred_len,
            variant: variant.to_string(),
            mse: mse / n as f64,
            mae: mae / n as f64,
            samples: n,
        })
        .collect()
}

/// Scores `params` on `examples` in evaluation mode.
pub fn evaluate(
    params: &ParameterSet,
    cfg: &ModelConfig,
    examples: &[TrainingExample],
    variant: &str,
    meta: ReportMeta,
) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(CoreError::Data("no samples to evaluate".into()));
    }
    let samples = examples
        .par_iter()
        .map(|e| {
            let pred = model::forward(&e.tokens, &e.window, params, cfg)?;
            Ok(score(e, pred.data(), variant, meta.units))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = aggregate(&samples, variant);
    Ok(Evaluation {
        report: EvaluationReport { meta, rows },
        samples,
    })
}

/// Repeats the last pre-window value of every channel over the horizon.
pub fn persistence_baseline(examples: &[TrainingExample], meta: ReportMeta) -> Evaluation {
    let samples: Vec<SampleScore> = examples
        .iter()
        .map(|e| {
            let last = e.window.row(e.window.rows() - 1);
            let len = e.target.cols();
            let pred: Vec<f64> = last.iter().flat_map(|&v| std::iter::repeat(v).take(len)).collect();
            score(e, &pred, PERSISTENCE_LABEL, meta.units)
        })
        .collect();
    let rows = aggregate(&samples, PERSISTENCE_LABEL);
    Evaluation {
        report: EvaluationReport { meta, rows },
        samples,
    }
}

/// Distances from the series embedding to the ground-truth script embedding
/// and to the nearest counterfactual embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalMargin {
    pub key: String,
    pub ground_truth: f64,
    pub nearest_counterfactual: f64,
}

impl CausalMargin {
    pub fn separated(&self) -> bool {
        self.ground_truth < self.nearest_counterfactual
    }
}

pub fn causal_margins(params: &ParameterSet, cfg: &ModelConfig, examples: &[TrainingExample]) -> Result<Vec<CausalMargin>> {
    examples
        .par_iter()
        .map(|e| {
            let negatives = e
                .negatives
                .as_ref()
                .filter(|n| !n.is_empty())
                .ok_or_else(|| CoreError::Data(format!("missing counterfactual set for sample {}", e.key)))?;
            let t = model::encode_series(&e.window, params, cfg)?;
            let gt = model::distance(&model::encode_text(&e.tokens, params, cfg)?, &t, cfg.distance)?;
            let mut nearest = f64::INFINITY;
            for n in negatives {
                nearest = nearest.min(model::distance(&model::encode_text(n, params, cfg)?, &t, cfg.distance)?);
            }
            Ok(CausalMargin {
                key: e.key.clone(),
                ground_truth: gt,
                nearest_counterfactual: nearest,
            })
        })
        .collect()
}
