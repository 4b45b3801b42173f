//! Component and event-type ablations.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate, evaluate, Evaluation, EvaluationReport, ReportMeta, ReportRow, SampleScore, Units};
use crate::corpus::EventType;
use crate::error::{CoreError, Result};
use crate::market::{split_dataset, DatasetSplit};
use crate::model::{Ablation, ModelConfig};
use crate::training::{fit, TrainConfig, TrainOutcome, TrainingExample};

pub const FULL_SELECTION_LABEL: &str = "Full Selection";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Run series-encoder pretraining before each full training.
    pub pretrain: bool,
    pub units: Units,
    /// Concurrent runs; `None` uses the global pool.
    pub workers: Option<usize>,
}

/// `base`, `base + 1`, ... (`n` seeds).
pub fn seeds_from(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

pub(crate) fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CoreError::Config(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// One seed's metrics for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: String,
    pub seed: u64,
    pub asset_id: String,
    pub pred_len: usize,
    pub mse: f64,
    pub mae: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRun {
    pub variant: String,
    pub seed: u64,
    pub outcome: TrainOutcome,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationOutcome {
    /// Median over seeds per variant.
    pub report: EvaluationReport,
    pub records: Vec<RunRecord>,
    pub runs: Vec<TrainedRun>,
}

/// Trains and scores one configuration on `data.test`.
pub(crate) fn train_and_score(
    data: &DatasetSplit<TrainingExample>,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    label: &str,
    opts: &RunOptions,
) -> Result<(TrainOutcome, Evaluation)> {
    let outcome = fit(data, cfg, tc, opts.pretrain)?;
    let meta = ReportMeta::new(cfg, tc, &data.test, opts.units)?;
    let evaluation = evaluate(&outcome.params, cfg, &data.test, label, meta)?;
    Ok((outcome, evaluation))
}

fn records_of(evaluation: &Evaluation, seed: u64) -> Vec<RunRecord> {
    evaluation
        .report
        .rows
        .iter()
        .map(|r| RunRecord {
            variant: r.variant.clone(),
            seed,
            asset_id: r.asset_id.clone(),
            pred_len: r.pred_len,
            mse: r.mse,
            mae: r.mae,
            samples: r.samples,
        })
        .collect()
}

/// Median rows in `labels` order within each `(asset, pred_len)`.
fn median_rows(records: &[RunRecord], labels: &[String]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(String, usize, usize), (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let order = labels.iter().position(|l| *l == r.variant).unwrap_or(labels.len());
        let g = groups.entry((r.asset_id.clone(), r.pred_len, order)).or_default();
        g.0.push(r.mse);
        g.1.push(r.mae);
        g.2 = r.samples;
    }
    groups
        .into_iter()
        .map(|((asset_id, pred_len, order), (mse, mae, samples))| ReportRow {
            asset_id,
            pred_len,
            variant: labels[order].clone(),
            mse: median(&mse),
            mae: median(&mae),
            samples,
        })
        .collect()
}

/// Trains every variant from every seed (each variant starts from the
/// same initial parameters for a given seed) and scores it on the test
/// split. Rows hold the median over seeds.
pub fn run_ablation(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    variants: &[Ablation],
    data: &DatasetSplit<TrainingExample>,
    seeds: &[u64],
    opts: &RunOptions,
) -> Result<AblationOutcome> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(CoreError::Config("ablation needs at least one variant and one seed".into()));
    }
    for v in variants {
        v.validate()?;
    }
    if data.test.is_empty() {
        return Err(CoreError::Data("ablation needs a non-empty test split".into()));
    }
    let jobs: Vec<(Ablation, u64)> = variants.iter().flat_map(|v| seeds.iter().map(move |s| (*v, *s))).collect();
    let runs = in_pool(opts.workers, || {
        jobs.par_iter()
            .map(|&(ablation, seed)| {
                let vcfg = ModelConfig { ablation, ..cfg.clone() };
                let vtc = TrainConfig { seed, ..tc.clone() };
                let label = ablation.label();
                log::info!("ablation `{label}` seed {seed}");
                let (outcome, evaluation) = train_and_score(data, &vcfg, &vtc, &label, opts)?;
                Ok(TrainedRun {
                    variant: label,
                    seed,
                    outcome,
                    evaluation,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let records: Vec<RunRecord> = runs.iter().flat_map(|r| records_of(&r.evaluation, r.seed)).collect();
    let labels: Vec<String> = variants.iter().map(Ablation::label).collect();
    let meta = ReportMeta::new(cfg, tc, &data.test, opts.units)?;
    Ok(AblationOutcome {
        report: EvaluationReport {
            meta,
            rows: median_rows(&records, &labels),
        },
        records,
        runs,
    })
}

/// One Table-4 style row. Rows for partitions that could not be trained
/// carry no metrics and a note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTypeRow {
    pub selection: String,
    pub pred_len: usize,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    /// `↓` below the Full Selection value, `↑` above, `=` equal; empty on
    /// the Full Selection row itself and on warning rows.
    pub mse_marker: String,
    pub mae_marker: String,
    pub samples: usize,
    pub note: Option<String>,
}

/// Every example key a run touched (train, validation and test).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub selection: String,
    pub seed: u64,
    pub keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTypeReport {
    pub meta: ReportMeta,
    pub rows: Vec<EventTypeRow>,
    pub audit: Vec<AuditEntry>,
    pub records: Vec<RunRecord>,
}

fn marker(value: f64, reference: f64) -> String {
    if value < reference {
        "↓"
    } else if value > reference {
        "↑"
    } else {
        "="
    }
    .to_string()
}

/// Trains and scores each single-type subset and the union of all types.
/// Each subset is split chronologically on its own; metrics pool the test
/// samples of every asset and are the median over seeds.
pub fn run_event_type_ablation(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    examples: &[TrainingExample],
    seeds: &[u64],
    opts: &RunOptions,
) -> Result<EventTypeReport> {
    if seeds.is_empty() {
        return Err(CoreError::Config("event-type ablation needs at least one seed".into()));
    }
    let mut selections: Vec<(String, Vec<TrainingExample>)> = EventType::ALL
        .iter()
        .map(|t| {
            let subset = examples.iter().filter(|e| e.event_type == *t).cloned().collect();
            (t.report_name().to_string(), subset)
        })
        .collect();
    selections.push((FULL_SELECTION_LABEL.to_string(), examples.to_vec()));

    let mut splits: Vec<(String, std::result::Result<DatasetSplit<TrainingExample>, String>)> = Vec::new();
    for (label, subset) in selections {
        let split = if subset.is_empty() {
            Err("no samples of this type".to_string())
        } else {
            split_dataset(subset).map_err(|e| e.to_string())
        };
        splits.push((label, split));
    }
    let full_split = match &splits.last().expect("full selection present").1 {
        Ok(s) => s.clone(),
        Err(e) => return Err(CoreError::Data(format!("full selection cannot be split: {e}"))),
    };

    let jobs: Vec<(usize, u64)> = splits
        .iter()
        .enumerate()
        .filter(|(_, (_, s))| s.is_ok())
        .flat_map(|(i, _)| seeds.iter().map(move |s| (i, *s)))
        .collect();
    let results = in_pool(opts.workers, || {
        jobs.par_iter()
            .map(|&(i, seed)| {
                let (label, split) = &splits[i];
                let split = split.as_ref().expect("filtered to splittable selections");
                let vtc = TrainConfig { seed, ..tc.clone() };
                log::info!("event-type run `{label}` seed {seed}");
                let (_, evaluation) = train_and_score(split, cfg, &vtc, label, opts)?;
                let keys = split
                    .train
                    .iter()
                    .chain(&split.validation)
                    .chain(&split.test)
                    .map(|e| e.key.clone())
                    .collect();
                Ok((i, seed, evaluation.samples, AuditEntry { selection: label.clone(), seed, keys }))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut records = Vec::new();
    let mut audit = Vec::new();
    // (selection, pred_len) -> per-seed pooled MSE and MAE, sample count
    let mut pooled: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for (i, seed, samples, entry) in results {
        let label = &splits[i].0;
        let by_len: BTreeMap<usize, Vec<SampleScore>> = samples.into_iter().fold(BTreeMap::new(), |mut m, s| {
            m.entry(s.pred_len).or_insert_with(Vec::new).push(s);
            m
        });
        for (pred_len, scores) in by_len {
            let n = scores.len() as f64;
            let g = pooled.entry((i, pred_len)).or_default();
            g.0.push(scores.iter().map(|s| s.mse).sum::<f64>() / n);
            g.1.push(scores.iter().map(|s| s.mae).sum::<f64>() / n);
            g.2 = scores.len();
            records.extend(aggregate(&scores, label).into_iter().map(|r| RunRecord {
                variant: r.variant,
                seed,
                asset_id: r.asset_id,
                pred_len: r.pred_len,
                mse: r.mse,
                mae: r.mae,
                samples: r.samples,
            }));
        }
        audit.push(entry);
    }

    let full_index = splits.len() - 1;
    let pred_lens: Vec<usize> = pooled.keys().filter(|(i, _)| *i == full_index).map(|(_, l)| *l).collect();
    let mut rows = Vec::new();
    for &pred_len in &pred_lens {
        let (fm, fa) = {
            let g = &pooled[&(full_index, pred_len)];
            (median(&g.0), median(&g.1))
        };
        for (i, (label, split)) in splits.iter().enumerate() {
            let row = match (split, pooled.get(&(i, pred_len))) {
                (Ok(_), Some(g)) => {
                    let (mse, mae) = (median(&g.0), median(&g.1));
                    let is_full = i == full_index;
                    EventTypeRow {
                        selection: label.clone(),
                        pred_len,
                        mse: Some(mse),
                        mae: Some(mae),
                        mse_marker: if is_full { String::new() } else { marker(mse, fm) },
                        mae_marker: if is_full { String::new() } else { marker(mae, fa) },
                        samples: g.2,
                        note: None,
                    }
                }
                (Err(reason), _) => {
                    log::warn!("event-type selection `{label}` skipped: {reason}");
                    EventTypeRow {
                        selection: label.clone(),
                        pred_len,
                        mse: None,
                        mae: None,
                        mse_marker: String::new(),
                        mae_marker: String::new(),
                        samples: 0,
                        note: Some(format!("skipped: {reason}")),
                    }
                }
                (Ok(_), None) => continue,
            };
            rows.push(row);
        }
    }
    audit.sort_by(|a, b| (&a.selection, a.seed).cmp(&(&b.selection, b.seed)));
    records.sort_by(|a, b| (&a.variant, a.seed, &a.asset_id, a.pred_len).cmp(&(&b.variant, b.seed, &b.asset_id, b.pred_len)));
    Ok(EventTypeReport {
        meta: ReportMeta::new(cfg, tc, &full_split.test, opts.units)?,
        rows,
        audit,
        records,
    })
}
