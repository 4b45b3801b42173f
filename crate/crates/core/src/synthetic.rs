//! Synthetic corpora and market data with known structure, for tests and
//! desk-scale experiments.
//!
//! The planted-sentiment dataset releases all six event types on each day,
//! at distinct sentiment levels. Each script names its level with one word
//! from [`LEVEL_WORDS`], the pre-window steps up at a bar position set by
//! the level, and the post-window trends with a slope set by the level.

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use eventcast_numerics::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EventType, RawFormat};
use crate::counterfactual::{BackendIdentity, CounterfactualRecord, Provenance};
use crate::error::Result;
use crate::market::{align_event, AlignedSample, Bar, BarSeries, BAR_SECONDS};
use crate::corpus::EventScript;

/// Sentiment word for each level 0..=10.
pub const LEVEL_WORDS: [&str; 11] = [
    "collapsing",
    "dire",
    "grim",
    "weak",
    "soft",
    "flat",
    "steady",
    "firm",
    "strong",
    "robust",
    "booming",
];

const FILLER: [&str; 10] = [
    "data", "series", "survey", "period", "month", "quarter", "index", "figures", "estimates", "revisions",
];

pub const SYNTHETIC_ASSET: &str = "SYN";

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub days: usize,
    pub tau: usize,
    /// Standard deviation of the additive price noise.
    pub noise: f64,
    /// Post-window drift per bar per level away from neutral (5).
    pub slope: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            days: 10,
            tau: 35,
            noise: 0.01,
            slope: 0.004,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedData {
    pub events: Vec<EventScript>,
    pub records: Vec<CounterfactualRecord>,
    pub samples: Vec<AlignedSample>,
}

pub fn synthetic_backend() -> BackendIdentity {
    BackendIdentity {
        name: "synthetic".into(),
        model: "planted-v1".into(),
    }
}

pub fn planted_text(event_type: EventType, level: u8, filler: &[&str]) -> String {
    format!(
        "{} release. Conditions were {}. {}.",
        event_type.report_name(),
        LEVEL_WORDS[level as usize],
        filler.join(" ")
    )
}

/// Bar index of the pre-window step for `level`.
pub fn step_position(level: u8, tau: usize) -> usize {
    let p = ((level as f64 + 1.0) / 12.0 * tau as f64).round() as usize;
    p.clamp(1, tau - 1)
}

fn flat_bar(timestamp: DateTime<Utc>, v: f64) -> Bar {
    Bar {
        timestamp,
        open: v,
        high: v,
        low: v,
        close: v,
    }
}

/// `2·tau` bars whose anchor (last pre-window bar) sits at `ts`.
fn planted_series(ts: DateTime<Utc>, level: u8, cfg: &PlantedConfig, rng: &mut ChaCha8Rng) -> Result<BarSeries> {
    let tau = cfg.tau;
    let p = step_position(level, tau);
    let base = rng.gen_range(50.0..150.0);
    let drift = (level as f64 - 5.0) * cfg.slope;
    let mut bars = Vec::with_capacity(2 * tau);
    let mut last = 0.0;
    for i in 0..2 * tau {
        let t = ts + Duration::seconds(BAR_SECONDS * (i as i64 - (tau as i64 - 1)));
        let noise = cfg.noise * (rng.gen::<f64>() - 0.5) * 2.0;
        let v = if i < tau {
            last = base + if i >= p { 1.0 } else { 0.0 };
            last + noise
        } else {
            last + drift * (i - tau + 1) as f64 + noise
        };
        bars.push(flat_bar(t, v));
    }
    BarSeries::new(SYNTHETIC_ASSET, bars)
}

/// Generates `cfg.days` days of six events each, all ten counterfactual
/// rewrites per event, and one aligned sample per event.
pub fn planted_dataset(cfg: &PlantedConfig) -> Result<PlantedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = NaiveDate::from_ymd_opt(2020, 1, 6).expect("valid date");
    let mut events = Vec::new();
    let mut records = Vec::new();
    let mut samples = Vec::new();
    for day in 0..cfg.days {
        let date = start + Duration::days(day as i64);
        let mut levels: Vec<u8> = (0..=10).collect();
        levels.shuffle(&mut rng);
        for (j, t) in EventType::ALL.into_iter().enumerate() {
            let level = levels[j];
            let naive = date.and_hms_opt(13, 30, 0).expect("valid time") + Duration::minutes(60 * j as i64);
            let ts = Utc.from_utc_datetime(&naive);
            let filler: Vec<&str> = (0..3).map(|_| *FILLER.choose(&mut rng).expect("non-empty")).collect();
            let event = EventScript {
                id: format!("{}-{}", t.as_str(), date.format("%Y-%m-%d")),
                event_type: t,
                release_timestamp: ts,
                raw_format: RawFormat::Txt,
                text: planted_text(t, level, &filler),
                sentiment: Some(level),
            };
            for target in (0..=10u8).filter(|&x| x != level) {
                records.push(CounterfactualRecord {
                    parent_event_id: event.id.clone(),
                    event_type: t,
                    target_sentiment: target,
                    text: planted_text(t, target, &filler),
                    provenance: Provenance {
                        backend: synthetic_backend(),
                        template_version: "planted".into(),
                        original_sentiment: level,
                    },
                });
            }
            let series = planted_series(ts, level, cfg, &mut rng)?;
            samples.push(align_event(&series, &event, cfg.tau)?);
            events.push(event);
        }
    }
    Ok(PlantedData {
        events,
        records,
        samples,
    })
}

/// Windows `tau × 1` of noisy sinusoids with random period, phase and
/// amplitude, z-scored per window.
pub fn sinusoid_windows(n: usize, tau: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let period = rng.gen_range(6.0..30.0);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp = rng.gen_range(0.5..2.0);
            let raw: Vec<f64> = (0..tau)
                .map(|i| amp * (std::f64::consts::TAU * i as f64 / period + phase).sin() + rng.gen_range(-0.05..0.05))
                .collect();
            let mean = raw.iter().sum::<f64>() / tau as f64;
            let std = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / tau as f64).sqrt().max(1e-12);
            Tensor::matrix(tau, 1, raw.iter().map(|v| (v - mean) / std).collect()).expect("tau > 0")
        })
        .collect()
}

/// Random-walk OHLC bars covering `half_width` bars either side of every
/// timestamp, merged into one strictly increasing series.
pub fn bars_around(asset: &str, timestamps: &[DateTime<Utc>], half_width: usize, seed: u64) -> Result<BarSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = BAR_SECONDS;
    let mut slots: Vec<i64> = Vec::new();
    for ts in timestamps {
        let anchor = ts.timestamp().div_euclid(step) * step;
        for k in -(half_width as i64)..=(half_width as i64) {
            slots.push(anchor + k * step);
        }
    }
    slots.sort_unstable();
    slots.dedup();
    let mut price: f64 = 100.0;
    let bars = slots
        .into_iter()
        .map(|s| {
            let open = price;
            let close = (open * (1.0 + rng.gen_range(-0.002..0.002))).max(1.0);
            let high = open.max(close) * (1.0 + rng.gen_range(0.0..0.001));
            let low = open.min(close) * (1.0 - rng.gen_range(0.0..0.001));
            price = close;
            Bar {
                timestamp: Utc.timestamp_opt(s, 0).single().expect("valid timestamp"),
                open,
                high,
                low,
                close,
            }
        })
        .collect();
    BarSeries::new(asset, bars)
}
