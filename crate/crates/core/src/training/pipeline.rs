//! Two-stage fitting from a seed.

use eventcast_numerics::Tensor;

use super::config::{FreezePolicy, TrainConfig};
use super::data::TrainingExample;
use super::full::{train_full, TrainOutcome};
use super::pretrain::pretrain_series_encoder;
use crate::error::Result;
use crate::market::DatasetSplit;
use crate::model::{init_params, ModelConfig};

/// Initializes parameters from `tc.seed`, optionally pretrains the series
/// encoder on the training windows, then trains the full model under the
/// standard freeze policy.
pub fn fit(data: &DatasetSplit<TrainingExample>, cfg: &ModelConfig, tc: &TrainConfig, pretrain: bool) -> Result<TrainOutcome> {
    let mut params = init_params(cfg, tc.seed)?;
    if pretrain {
        let windows: Vec<Tensor> = data.train.iter().map(|e| e.window.clone()).collect();
        params = pretrain_series_encoder(&params, &windows, cfg, tc)?.0;
    }
    train_full(&params, data, cfg, tc, &FreezePolicy::standard(cfg), None)
}
