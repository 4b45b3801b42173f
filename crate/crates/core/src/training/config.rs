//! Training hyper-parameters, the component learning-rate map and the
//! freezing policy.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::ModelConfig;
use eventcast_numerics::ParameterSet;

/// Learning rate per model component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningRates {
    pub series_encoder: f64,
    pub text_encoder: f64,
    pub decoder: f64,
    /// Decoder token embedding and the text projection head.
    pub embedding: f64,
    pub residual: f64,
    pub fusion: f64,
    /// Post-regressor hidden layers and output linear.
    pub output: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            series_encoder: 1e-6,
            text_encoder: 5e-7,
            decoder: 1e-5,
            embedding: 1e-5,
            residual: 1e-5,
            fusion: 5e-7,
            output: 1e-5,
        }
    }
}

/// Parameter-name prefix of each component, most specific first.
pub const COMPONENT_PREFIXES: [(&str, &str); 8] = [
    ("decoder.embed.", "embedding"),
    ("series_encoder.", "series_encoder"),
    ("text_encoder.", "text_encoder"),
    ("text_proj.", "embedding"),
    ("decoder.", "decoder"),
    ("residual.", "residual"),
    ("fusion.", "fusion"),
    ("regressor.", "output"),
];

impl LearningRates {
    pub fn get(&self, component: &str) -> Option<f64> {
        Some(match component {
            "series_encoder" => self.series_encoder,
            "text_encoder" => self.text_encoder,
            "decoder" => self.decoder,
            "embedding" => self.embedding,
            "residual" => self.residual,
            "fusion" => self.fusion,
            "output" => self.output,
            _ => return None,
        })
    }

    fn all(&self) -> [f64; 7] {
        [
            self.series_encoder,
            self.text_encoder,
            self.decoder,
            self.embedding,
            self.residual,
            self.fusion,
            self.output,
        ]
    }
}

/// Resolves a parameter name to its step size.
#[derive(Debug, Clone, PartialEq)]
pub enum RateMap {
    Components { rates: LearningRates, scale: f64 },
    Uniform(f64),
}

impl RateMap {
    pub fn rate_for(&self, name: &str) -> Result<f64> {
        match self {
            RateMap::Uniform(r) => Ok(*r),
            RateMap::Components { rates, scale } => COMPONENT_PREFIXES
                .iter()
                .find(|(p, _)| name.starts_with(p))
                .and_then(|(_, c)| rates.get(c))
                .map(|r| r * scale)
                .ok_or_else(|| CoreError::Config(format!("no learning-rate component for `{name}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub rates: LearningRates,
    /// Multiplies every component rate.
    pub rate_scale: f64,
    /// Validation checks without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub clip_norm: f64,
    /// Counterfactual negatives per sample (identical-type first, then
    /// diverse-type). `None` uses the whole set; `Some(0)` drops the causal term.
    pub negatives: Option<usize>,
    /// Stops after this many optimizer steps regardless of epochs.
    pub max_steps: Option<usize>,
    /// Steps over which rates ramp linearly up from zero.
    pub warmup_steps: usize,
    /// Rate multiplier reached at the last step along a cosine from 1.
    /// `1.0` keeps rates constant.
    pub final_rate_fraction: f64,
    pub pretrain_steps: usize,
    pub pretrain_rate: f64,
    pub mask_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 10,
            rates: LearningRates::default(),
            rate_scale: 1.0,
            patience: 3,
            seed: 0,
            clip_norm: 1.0,
            negatives: None,
            max_steps: None,
            warmup_steps: 0,
            final_rate_fraction: 1.0,
            pretrain_steps: 300,
            pretrain_rate: 1e-4,
            mask_ratio: 0.3,
        }
    }
}

impl TrainConfig {
    /// Rates scaled up for small from-scratch models and short runs.
    pub fn desk() -> Self {
        Self {
            rate_scale: 100.0,
            pretrain_rate: 1e-3,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            other => Err(CoreError::Config(format!("unknown preset `{other}`"))),
        }
    }

    pub fn rate_map(&self) -> RateMap {
        RateMap::Components {
            rates: self.rates,
            scale: self.rate_scale,
        }
    }

    /// Optimizer steps in a full run over `train_len` samples.
    pub fn total_steps(&self, train_len: usize) -> usize {
        let per_epoch = train_len.div_ceil(self.batch_size.max(1));
        let planned = self.epochs * per_epoch;
        self.max_steps.map_or(planned, |m| m.min(planned))
    }

    /// Rate multiplier for optimizer step `step` (1-based) of `total`.
    pub fn rate_factor(&self, step: usize, total: usize) -> f64 {
        let warm = if self.warmup_steps > 0 {
            (step as f64 / self.warmup_steps as f64).min(1.0)
        } else {
            1.0
        };
        let t = if total > 1 {
            (step.saturating_sub(1) as f64 / (total - 1) as f64).min(1.0)
        } else {
            0.0
        };
        let f = self.final_rate_fraction;
        warm * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
    }

    /// Rate map for optimizer step `step` (1-based) of `total`.
    pub fn rate_map_at(&self, step: usize, total: usize) -> RateMap {
        RateMap::Components {
            rates: self.rates,
            scale: self.rate_scale * self.rate_factor(step, total),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.final_rate_fraction) {
            return bad("final_rate_fraction must lie in [0, 1]");
        }
        if self.rates.all().iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("every learning rate must be positive");
        }
        if !(self.rate_scale.is_finite() && self.rate_scale > 0.0) {
            return bad("rate_scale must be positive");
        }
        if !(self.pretrain_rate.is_finite() && self.pretrain_rate > 0.0) {
            return bad("pretrain_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return bad("mask_ratio must lie in [0, 1]");
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn from_toml(table: &toml::Table) -> Result<Self> {
        let preset = match table.get("preset") {
            None => "desk",
            Some(toml::Value::String(s)) => s.as_str(),
            Some(_) => return Err(CoreError::Config("`preset` must be a string".into())),
        };
        let cfg: Self = crate::model::config::overlay(&Self::preset(preset)?, table, &["preset"])?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parameter-name prefixes held fixed during full training.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FreezePolicy {
    pub frozen: Vec<String>,
}

impl FreezePolicy {
    pub fn none() -> Self {
        Self::default()
    }

    /// Series encoder fully frozen, text encoder frozen except its final
    /// block, decoder token embedding frozen.
    pub fn standard(cfg: &ModelConfig) -> Self {
        let mut frozen = vec!["series_encoder.".to_string(), "text_encoder.embed.".to_string()];
        for i in 0..cfg.text_layers.saturating_sub(1) {
            frozen.push(format!("text_encoder.block{i}."));
        }
        if cfg.ablation.decoder {
            frozen.push("decoder.embed.".to_string());
        }
        Self { frozen }
    }

    /// Every parameter.
    pub fn all() -> Self {
        Self {
            frozen: vec![String::new()],
        }
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.iter().any(|p| name.starts_with(p.as_str()))
    }

    /// Clears the trainable flag of every matching parameter. Each prefix
    /// must match at least one name.
    pub fn apply(&self, params: &mut ParameterSet) -> Result<()> {
        for prefix in &self.frozen {
            if params.set_trainable_prefix(prefix, false) == 0 {
                return Err(CoreError::Config(format!(
                    "freeze prefix `{prefix}` matches no parameter"
                )));
            }
        }
        Ok(())
    }
}
