use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Bar, BarSeries, Channels};
use crate::corpus::EventScript;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

/// Windows of raw bars around one event. `stats` holds the pre-window
/// mean and standard deviation of open, high, low and close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedSample {
    pub event_id: String,
    pub asset_id: String,
    pub tau: usize,
    pub event_timestamp: DateTime<Utc>,
    pub anchor_index: usize,
    pub pre: Vec<Bar>,
    pub post: Vec<Bar>,
    pub stats: [ChannelStats; 4],
}

/// Anchor is the last bar at or before `ts`; the pre-window is the `tau`
/// bars ending at the anchor and the post-window the `tau` bars after it.
pub fn align_at(
    series: &BarSeries,
    event_id: &str,
    ts: DateTime<Utc>,
    tau: usize,
) -> Result<AlignedSample> {
    if tau == 0 {
        return Err(CoreError::Config("tau must be positive".into()));
    }
    let bars = series.bars();
    let at_or_before = bars.partition_point(|b| b.timestamp <= ts);
    if at_or_before == 0 {
        return Err(CoreError::Alignment(format!(
            "event `{event_id}` at {} precedes the first {} bar",
            ts.to_rfc3339(),
            series.asset_id()
        )));
    }
    let anchor = at_or_before - 1;
    let history = anchor + 1;
    if history < tau {
        return Err(CoreError::Alignment(format!(
            "event `{event_id}`: need {tau} bars up to the anchor, have {history} (short by {})",
            tau - history
        )));
    }
    let future = bars.len() - history;
    if future < tau {
        return Err(CoreError::Alignment(format!(
            "event `{event_id}`: need {tau} bars after the anchor, have {future} (short by {})",
            tau - future
        )));
    }
    let pre = bars[anchor + 1 - tau..=anchor].to_vec();
    let post = bars[anchor + 1..anchor + 1 + tau].to_vec();
    let stats = window_stats(&pre);
    Ok(AlignedSample {
        event_id: event_id.to_string(),
        asset_id: series.asset_id().to_string(),
        tau,
        event_timestamp: ts,
        anchor_index: anchor,
        pre,
        post,
        stats,
    })
}

pub fn align_event(series: &BarSeries, event: &EventScript, tau: usize) -> Result<AlignedSample> {
    align_at(series, &event.id, event.release_timestamp, tau)
}

/// Aligns every event, collecting per-event failures instead of stopping.
pub fn align_all(
    series: &BarSeries,
    events: &[EventScript],
    tau: usize,
) -> (Vec<AlignedSample>, Vec<(String, CoreError)>) {
    let results: Vec<_> = events
        .par_iter()
        .map(|e| (e.id.clone(), align_event(series, e, tau)))
        .collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            Ok(s) => ok.push(s),
            Err(e) => failed.push((id, e)),
        }
    }
    (ok, failed)
}

/// Threshold below which a pre-window channel counts as constant.
const CONSTANT_REL_STD: f64 = 1e-12;

fn window_stats(pre: &[Bar]) -> [ChannelStats; 4] {
    let n = pre.len() as f64;
    let mut out = [ChannelStats { mean: 0.0, std: 1.0 }; 4];
    for (c, slot) in out.iter_mut().enumerate() {
        let mean = pre.iter().map(|b| b.values()[c]).sum::<f64>() / n;
        let var = pre.iter().map(|b| (b.values()[c] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let std = if std <= CONSTANT_REL_STD * mean.abs().max(1.0) { 1.0 } else { std };
        *slot = ChannelStats { mean, std };
    }
    out
}

/// Z-scored windows over the selected channels, rows are bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSample {
    pub event_id: String,
    pub asset_id: String,
    pub tau: usize,
    pub event_timestamp: DateTime<Utc>,
    pub channels: Channels,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
    pub stats: Vec<ChannelStats>,
}

pub fn normalize_sample(sample: &AlignedSample, channels: Channels) -> NormalizedSample {
    let idx = channels.indices();
    let stats: Vec<ChannelStats> = idx.iter().map(|&c| sample.stats[c]).collect();
    let z = |bars: &[Bar]| -> Vec<Vec<f64>> {
        bars.iter()
            .map(|b| {
                let v = b.values();
                idx.iter()
                    .zip(&stats)
                    .map(|(&c, s)| (v[c] - s.mean) / s.std)
                    .collect()
            })
            .collect()
    };
    NormalizedSample {
        event_id: sample.event_id.clone(),
        asset_id: sample.asset_id.clone(),
        tau: sample.tau,
        event_timestamp: sample.event_timestamp,
        channels,
        pre: z(&sample.pre),
        post: z(&sample.post),
        stats,
    }
}

impl NormalizedSample {
    pub fn channel_count(&self) -> usize {
        self.stats.len()
    }

    /// Maps rows of normalized values back to original units.
    pub fn denormalize(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().zip(&self.stats).map(|(v, s)| v * s.std + s.mean).collect())
            .collect()
    }

    /// Post-window as a `(d, tau)` channel-major matrix.
    pub fn target_channel_major(&self) -> Vec<f64> {
        transpose_rows(&self.post, self.channel_count())
    }

    /// Pre-window flattened row-major `(tau, d)`.
    pub fn input_row_major(&self) -> Vec<f64> {
        self.pre.iter().flatten().copied().collect()
    }
}

pub(crate) fn transpose_rows(rows: &[Vec<f64>], d: usize) -> Vec<f64> {
    let t = rows.len();
    let mut out = vec![0.0; d * t];
    for (i, r) in rows.iter().enumerate() {
        for (c, v) in r.iter().enumerate() {
            out[c * t + i] = *v;
        }
    }
    out
}
