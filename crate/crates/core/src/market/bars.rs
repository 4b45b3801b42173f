use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Bar length in seconds (5 minutes).
pub const BAR_SECONDS: i64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub timestamp: DateTime<Utc>,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl Bar {
    pub fn values(&self) -> [f64; 4] {
        [self.open, self.high, self.low, self.close]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarSeries {
    asset_id: String,
    bars: Vec<Bar>,
}

/// Treasury yield tickers may legitimately touch zero.
fn is_yield(asset_id: &str) -> bool {
    asset_id.starts_with("USGG")
}

impl BarSeries {
    pub fn new(asset_id: impl Into<String>, bars: Vec<Bar>) -> Result<Self> {
        let asset_id = asset_id.into();
        let positive = !is_yield(&asset_id);
        for (i, b) in bars.iter().enumerate() {
            let v = b.values();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(CoreError::Data(format!("{asset_id} bar {i}: non-finite value")));
            }
            if positive && v.iter().any(|&x| x <= 0.0) {
                return Err(CoreError::Data(format!("{asset_id} bar {i}: non-positive price")));
            }
            if b.high < b.open.max(b.close) || b.low > b.open.min(b.close) {
                return Err(CoreError::Data(format!(
                    "{asset_id} bar {i}: high/low do not bracket open/close"
                )));
            }
            if b.timestamp.timestamp() % BAR_SECONDS != 0 {
                return Err(CoreError::Data(format!(
                    "{asset_id} bar {i}: {} is not on a 5-minute boundary",
                    b.timestamp.to_rfc3339()
                )));
            }
            if i > 0 && bars[i - 1].timestamp >= b.timestamp {
                return Err(CoreError::Data(format!(
                    "{asset_id} bar {i}: timestamps not strictly increasing"
                )));
            }
        }
        Ok(Self { asset_id, bars })
    }

    pub fn asset_id(&self) -> &str {
        &self.asset_id
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    timestamp: String,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
}

/// Reads `timestamp,open,high,low,close` with RFC 3339 timestamps.
pub fn read_bars(path: &Path, asset_id: &str) -> Result<BarSeries> {
    crate::io::require(path)?;
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = ["timestamp", "open", "high", "low", "close"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(CoreError::Format(format!(
            "{}: header must be `{}`",
            path.display(),
            expected.join(",")
        )));
    }
    let mut bars = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row?;
        let timestamp = DateTime::parse_from_rfc3339(&row.timestamp)
            .map_err(|e| CoreError::Format(format!("{} row {}: {e}", path.display(), i + 1)))?
            .with_timezone(&Utc);
        bars.push(Bar {
            timestamp,
            open: row.open,
            high: row.high,
            low: row.low,
            close: row.close,
        });
    }
    BarSeries::new(asset_id, bars)
}

pub fn write_bars(path: &Path, series: &BarSeries) -> Result<()> {
    crate::io::ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    for b in series.bars() {
        w.serialize(Row {
            timestamp: b.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            open: b.open,
            high: b.high,
            low: b.low,
            close: b.close,
        })?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}
