//! Architecture configuration and the `paper` / `desk` presets.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Distance used by the triplet loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`.
    Cosine,
}

/// Component toggles. All on is the full model; each off switch selects a
/// degraded path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub textual: bool,
    pub causal: bool,
    pub fusion: bool,
    pub decoder: bool,
    pub post_regressor: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self::FULL
    }
}

pub const FULL_MODEL_LABEL: &str = "Full Model";

impl Ablation {
    pub const FULL: Ablation = Ablation {
        textual: true,
        causal: true,
        fusion: true,
        decoder: true,
        post_regressor: true,
    };

    pub fn toggles(&self) -> [(&'static str, bool); 5] {
        [
            ("Textual", self.textual),
            ("Causal", self.causal),
            ("Feature Fusion", self.fusion),
            ("GPT2 Decoder", self.decoder),
            ("Post-Regressor", self.post_regressor),
        ]
    }

    pub fn is_full(&self) -> bool {
        *self == Self::FULL
    }

    /// `Full Model`, or `w/o <component> + <component>` for variants.
    pub fn label(&self) -> String {
        if self.is_full() {
            return FULL_MODEL_LABEL.to_string();
        }
        let off: Vec<&str> = self
            .toggles()
            .iter()
            .filter(|(_, on)| !on)
            .map(|(n, _)| *n)
            .collect();
        format!("w/o {}", off.join(" + "))
    }

    pub fn validate(&self) -> Result<()> {
        if self.toggles().iter().all(|(_, on)| !on) {
            return Err(CoreError::Spec("every component is switched off".into()));
        }
        Ok(())
    }

    /// Parses a comma-separated list of components to switch off, e.g.
    /// `textual,causal`. An empty string is the full model.
    pub fn parse_off_list(list: &str) -> Result<Self> {
        let mut a = Self::FULL;
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
                "textual" | "text" => a.textual = false,
                "causal" => a.causal = false,
                "fusion" | "feature-fusion" => a.fusion = false,
                "decoder" => a.decoder = false,
                "post-regressor" | "regressor" => a.post_regressor = false,
                other => return Err(CoreError::Spec(format!("unknown component `{other}`"))),
            }
        }
        a.validate()?;
        Ok(a)
    }

    /// The five single-component removals followed by the full model.
    pub fn table_rows() -> Vec<Ablation> {
        let f = Self::FULL;
        vec![
            Ablation { textual: false, ..f },
            Ablation { causal: false, ..f },
            Ablation { fusion: false, ..f },
            Ablation { decoder: false, ..f },
            Ablation { post_regressor: false, ..f },
            f,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hashing-tokenizer bucket count.
    pub vocab_size: usize,
    pub max_text_tokens: usize,
    pub text_embed_dim: usize,
    /// Contextual blocks in the text encoder. Zero leaves bare token
    /// embeddings (no positions, no attention).
    pub text_layers: usize,
    pub text_heads: usize,
    pub text_proj_hidden: usize,
    pub series_embed_dim: usize,
    pub series_layers: usize,
    pub series_heads: usize,
    /// Bars per patch token of the series encoder.
    pub patch_len: usize,
    pub max_patches: usize,
    pub residual_hidden: usize,
    pub fusion_hidden: usize,
    /// `s`: tokens the fused vector is reshaped into before decoding.
    pub decoder_tokens: usize,
    pub decoder_layers: usize,
    pub decoder_heads: usize,
    /// `k`: hidden layers of the post-regressor.
    pub regressor_layers: usize,
    pub regressor_hidden: usize,
    pub dropout: f64,
    /// Triplet margin α.
    pub margin: f64,
    pub distance: Distance,
    /// Forecast channels.
    pub d: usize,
    /// Bars in the input window.
    pub input_len: usize,
    pub pred_len: usize,
    pub time_weight: f64,
    pub causal_weight: f64,
    #[serde(default)]
    pub ablation: Ablation,
}

pub const PRESETS: [&str; 2] = ["paper", "desk"];

impl ModelConfig {
    pub fn paper() -> Self {
        Self {
            vocab_size: 8192,
            max_text_tokens: 512,
            text_embed_dim: 768,
            text_layers: 2,
            text_heads: 12,
            text_proj_hidden: 1024,
            series_embed_dim: 768,
            series_layers: 2,
            series_heads: 12,
            patch_len: 5,
            max_patches: 28,
            residual_hidden: 1024,
            fusion_hidden: 1024,
            decoder_tokens: 8,
            decoder_layers: 12,
            decoder_heads: 4,
            regressor_layers: 4,
            regressor_hidden: 1024,
            dropout: 0.1,
            margin: 1.0,
            distance: Distance::Euclidean,
            d: 1,
            input_len: 35,
            pred_len: 35,
            time_weight: 1.0,
            causal_weight: 1.0,
            ablation: Ablation::FULL,
        }
    }

    /// Widths divided by 16, depths and counts kept.
    pub fn desk() -> Self {
        Self {
            vocab_size: 1024,
            max_text_tokens: 48,
            text_embed_dim: 48,
            text_heads: 4,
            text_proj_hidden: 64,
            series_embed_dim: 48,
            series_heads: 4,
            residual_hidden: 64,
            fusion_hidden: 64,
            regressor_hidden: 64,
            ..Self::paper()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(CoreError::Config(format!(
                "unknown preset `{other}` (expected one of {PRESETS:?})"
            ))),
        }
    }

    /// Sets input and forecast length to the alignment window `tau`.
    pub fn with_tau(mut self, tau: usize) -> Self {
        self.input_len = tau;
        self.pred_len = tau;
        self
    }

    pub fn decoder_token_dim(&self) -> usize {
        self.fusion_hidden / self.decoder_tokens.max(1)
    }

    pub fn patches(&self) -> usize {
        self.input_len / self.patch_len.max(1)
    }

    pub fn output_len(&self) -> usize {
        self.d * self.pred_len
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("max_text_tokens", self.max_text_tokens),
            ("text_embed_dim", self.text_embed_dim),
            ("text_heads", self.text_heads),
            ("text_proj_hidden", self.text_proj_hidden),
            ("series_embed_dim", self.series_embed_dim),
            ("series_heads", self.series_heads),
            ("patch_len", self.patch_len),
            ("max_patches", self.max_patches),
            ("residual_hidden", self.residual_hidden),
            ("fusion_hidden", self.fusion_hidden),
            ("decoder_tokens", self.decoder_tokens),
            ("decoder_heads", self.decoder_heads),
            ("regressor_hidden", self.regressor_hidden),
            ("d", self.d),
            ("input_len", self.input_len),
            ("pred_len", self.pred_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(CoreError::Config(format!("{name} must be positive")));
        }
        let cfg = |m: String| Err(CoreError::Config(m));
        if self.text_embed_dim != self.series_embed_dim {
            return cfg(format!(
                "text_embed_dim {} differs from series_embed_dim {}",
                self.text_embed_dim, self.series_embed_dim
            ));
        }
        if self.fusion_hidden % self.decoder_tokens != 0 {
            return cfg(format!(
                "decoder_tokens {} does not divide fusion_hidden {}",
                self.decoder_tokens, self.fusion_hidden
            ));
        }
        if self.decoder_token_dim() % self.decoder_heads != 0 {
            return cfg(format!(
                "decoder_heads {} does not divide the per-token dim {}",
                self.decoder_heads,
                self.decoder_token_dim()
            ));
        }
        if self.text_embed_dim % self.text_heads != 0 {
            return cfg("text_heads must divide text_embed_dim".into());
        }
        if self.series_embed_dim % self.series_heads != 0 {
            return cfg("series_heads must divide series_embed_dim".into());
        }
        if self.input_len % self.patch_len != 0 {
            return cfg(format!(
                "patch_len {} does not divide input_len {}",
                self.patch_len, self.input_len
            ));
        }
        if self.patches() > self.max_patches {
            return cfg(format!(
                "{} patches exceed max_patches {}",
                self.patches(),
                self.max_patches
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return cfg(format!("dropout {} not in [0, 1)", self.dropout));
        }
        for (name, v) in [
            ("margin", self.margin),
            ("time_weight", self.time_weight),
            ("causal_weight", self.causal_weight),
        ] {
            if !v.is_finite() || v < 0.0 {
                return cfg(format!("{name} must be finite and non-negative"));
            }
        }
        self.ablation.validate()
    }

    /// Builds a config from a TOML table. A `preset` key picks the base
    /// (default `desk`); every other key overrides one field.
    pub fn from_toml(table: &toml::Table) -> Result<Self> {
        let preset = match table.get("preset") {
            None => "desk",
            Some(toml::Value::String(s)) => s.as_str(),
            Some(_) => return Err(CoreError::Config("`preset` must be a string".into())),
        };
        let base = Self::preset(preset)?;
        let cfg: Self = overlay(&base, table, &["preset"])?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Serializes `base` to TOML, overwrites it with the keys of `table`
/// (except `skip`), and deserializes the result.
pub(crate) fn overlay<T>(base: &T, table: &toml::Table, skip: &[&str]) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut merged = toml::Table::try_from(base).map_err(|e| CoreError::Config(e.to_string()))?;
    for (k, v) in table {
        if skip.contains(&k.as_str()) {
            continue;
        }
        match (merged.get_mut(k), v) {
            (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => {
                for (ik, iv) in src {
                    dst.insert(ik.clone(), iv.clone());
                }
            }
            _ => {
                merged.insert(k.clone(), v.clone());
            }
        }
    }
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| CoreError::Config(e.message().to_string()))
}
