//! Series-encoder pretraining and full-model training.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod full;
pub mod history;
pub mod optimizer;
pub mod pipeline;
pub mod pretrain;

pub use checkpoint::{load_checkpoint, save_checkpoint, TrainState};
pub use config::{FreezePolicy, LearningRates, RateMap, TrainConfig, COMPONENT_PREFIXES};
pub use data::{build_examples, examples_from_corpus, TrainingExample};
pub use full::{causal_active, eval_time_loss, resume_full, train_full, StepLosses, TrainOutcome};
pub use history::{read_history, write_history, HistoryRow};
pub use optimizer::{clip_global_norm, optimizer_step, Adam};
pub use pipeline::fit;
pub use pretrain::{masked_mse, masked_reconstruction, pretrain_series_encoder, random_mask};

use eventcast_numerics::Gradients;

/// Mixes a base seed, a purpose tag and an index into an independent seed.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut z = seed ^ crate::model::tokenizer::fnv1a(tag.as_bytes()) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Element-wise mean of per-example gradients, summed in the given order.
pub fn mean_gradients(parts: Vec<Gradients>) -> Gradients {
    let n = parts.len().max(1) as f64;
    let mut iter = parts.into_iter();
    let mut acc = iter.next().unwrap_or_default();
    for part in iter {
        for (name, g) in part {
            match acc.get_mut(&name) {
                Some(a) => {
                    for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                        *x += y;
                    }
                }
                None => {
                    acc.insert(name, g);
                }
            }
        }
    }
    for g in acc.values_mut() {
        for x in g.data_mut() {
            *x /= n;
        }
    }
    acc
}
