//! Random model-ready examples for training and evaluation tests.

use chrono::{DateTime, TimeZone, Utc};
use eventcast_core::corpus::EventType;
use eventcast_core::market::{ChannelStats, DatasetSplit};
use eventcast_core::model::ModelConfig;
use eventcast_core::training::TrainingExample;
use eventcast_numerics::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tokens(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Vec<usize> {
    let n = rng.gen_range(1..=cfg.max_text_tokens);
    (0..n).map(|_| rng.gen_range(0..cfg.vocab_size)).collect()
}

pub fn at_hour(i: usize) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::hours(i as i64)
}

/// Uniform(-1, 1) window and target (or a constant target), three random
/// negatives, unit stats.
pub fn example(i: usize, cfg: &ModelConfig, target: Option<f64>, rng: &mut ChaCha8Rng) -> TrainingExample {
    let window = Tensor::matrix(cfg.input_len, cfg.d, (0..cfg.input_len * cfg.d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let target = Tensor::matrix(
        cfg.d,
        cfg.pred_len,
        (0..cfg.d * cfg.pred_len).map(|_| target.unwrap_or_else(|| rng.gen_range(-1.0..1.0))).collect(),
    )
    .unwrap();
    let negatives = (0..3).map(|_| tokens(rng, cfg)).collect();
    TrainingExample {
        key: format!("E{i}@A"),
        event_id: format!("E{i}"),
        asset_id: "A".into(),
        event_type: EventType::Fomc,
        timestamp: at_hour(i),
        tokens: tokens(rng, cfg),
        window,
        target,
        stats: vec![ChannelStats { mean: 0.0, std: 1.0 }; cfg.d],
        negatives: Some(negatives),
    }
}

pub fn examples(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| example(i, cfg, None, &mut rng)).collect()
}

pub fn split(cfg: &ModelConfig, n_train: usize, n_val: usize, seed: u64) -> DatasetSplit<TrainingExample> {
    let mut all = examples(cfg, n_train + n_val, seed);
    let validation = all.split_off(n_train);
    DatasetSplit { train: all, validation, test: vec![] }
}
