//! Model-ready training examples.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use eventcast_numerics::Tensor;

use crate::corpus::EventType;
use crate::counterfactual::{CounterfactualSet, Registry};
use crate::error::{CoreError, Result};
use crate::market::{ChannelStats, NormalizedSample, Timestamped};
use crate::model::{tokenize, ModelConfig};

/// One aligned sample with its tokenized script and counterfactual negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// `<event id>@<asset id>`.
    pub key: String,
    pub event_id: String,
    pub asset_id: String,
    pub event_type: EventType,
    pub timestamp: DateTime<Utc>,
    pub tokens: Vec<usize>,
    /// Normalized pre-window, `input_len × d`.
    pub window: Tensor,
    /// Normalized post-window, `d × pred_len`.
    pub target: Tensor,
    pub stats: Vec<ChannelStats>,
    /// Negatives in sampling order: identical-type by ascending target,
    /// then diverse-type in type order.
    pub negatives: Option<Vec<Vec<usize>>>,
}

impl Timestamped for TrainingExample {
    fn timestamp(&self) -> DateTime<Utc> {
        self.timestamp
    }

    fn key(&self) -> &str {
        &self.key
    }
}

fn tokens_of(text: &str, cfg: &ModelConfig, what: &str) -> Result<Vec<usize>> {
    let t = tokenize(text, cfg.vocab_size, cfg.max_text_tokens);
    if t.is_empty() {
        return Err(CoreError::Input(format!("{what} has no tokens")));
    }
    Ok(t)
}

/// Builds examples for `samples`. Every sample's event must be in the
/// registry; samples whose event has no entry in `sets` get no negatives.
pub fn build_examples(
    samples: &[NormalizedSample],
    registry: &Registry,
    sets: &BTreeMap<String, CounterfactualSet>,
    cfg: &ModelConfig,
) -> Result<Vec<TrainingExample>> {
    samples
        .iter()
        .map(|s| {
            let event = registry
                .get(&s.event_id)
                .ok_or_else(|| CoreError::Data(format!("sample references unknown event `{}`", s.event_id)))?;
            if s.channel_count() != cfg.d || s.tau != cfg.input_len || s.post.len() != cfg.pred_len {
                return Err(CoreError::Data(format!(
                    "sample {}@{} is {} bars × {} channels, model expects {} × {}",
                    s.event_id,
                    s.asset_id,
                    s.tau,
                    s.channel_count(),
                    cfg.input_len,
                    cfg.d
                )));
            }
            let negatives = match sets.get(&s.event_id) {
                None => None,
                Some(set) => {
                    let mut out = Vec::with_capacity(set.len());
                    for r in &set.identical {
                        out.push(tokens_of(&r.text, cfg, "counterfactual")?);
                    }
                    for d in &set.diverse {
                        let e = registry
                            .get(&d.event_id)
                            .ok_or_else(|| CoreError::Data(format!("unknown diverse event `{}`", d.event_id)))?;
                        out.push(tokens_of(&e.text, cfg, "diverse event")?);
                    }
                    Some(out)
                }
            };
            Ok(TrainingExample {
                key: format!("{}@{}", s.event_id, s.asset_id),
                event_id: s.event_id.clone(),
                asset_id: s.asset_id.clone(),
                event_type: event.event_type,
                timestamp: s.event_timestamp,
                tokens: tokens_of(&event.text, cfg, "event script")?,
                window: Tensor::matrix(cfg.input_len, cfg.d, s.input_row_major())?,
                target: Tensor::matrix(cfg.d, cfg.pred_len, s.target_channel_major())?,
                stats: s.stats.clone(),
                negatives,
            })
        })
        .collect()
}

/// Normalizes aligned samples, draws each event's counterfactual set
/// (`n_identical` identical-type plus one per other type) and builds the
/// examples. Events without enough counterfactuals get no negatives.
pub fn examples_from_corpus(
    events: &[crate::corpus::EventScript],
    records: &[crate::counterfactual::CounterfactualRecord],
    samples: &[crate::market::AlignedSample],
    n_identical: usize,
    cfg: &ModelConfig,
) -> Result<Vec<TrainingExample>> {
    let channels = crate::market::Channels::from_count(cfg.d)?;
    let registry = Registry::new(events);
    let mut sets = BTreeMap::new();
    for s in samples {
        if sets.contains_key(&s.event_id) {
            continue;
        }
        let event = registry
            .get(&s.event_id)
            .ok_or_else(|| CoreError::Data(format!("sample references unknown event `{}`", s.event_id)))?;
        match crate::counterfactual::sample_counterfactuals(event, &registry, records, n_identical) {
            Ok(set) => {
                sets.insert(s.event_id.clone(), set);
            }
            Err(e) => log::warn!("{}: no counterfactual set ({e})", s.event_id),
        }
    }
    let normalized: Vec<NormalizedSample> = samples
        .iter()
        .map(|s| crate::market::normalize_sample(s, channels))
        .collect();
    build_examples(&normalized, &registry, &sets, cfg)
}
