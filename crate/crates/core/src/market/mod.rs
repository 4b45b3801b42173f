//! OHLC bar series, event alignment, per-sample normalization and
//! chronological splitting.

mod align;
mod bars;
mod split;

pub use align::{align_all, align_at, align_event, normalize_sample, AlignedSample, ChannelStats, NormalizedSample};
pub use bars::{read_bars, write_bars, Bar, BarSeries, BAR_SECONDS};
pub use split::{split_dataset, DatasetSplit, Timestamped};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Supported window lengths, in bars.
pub const TAUS: [usize; 3] = [35, 70, 140];

/// Which bar fields feed the model and the targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channels {
    #[default]
    Close,
    Ohlc,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Close => 1,
            Channels::Ohlc => 4,
        }
    }

    /// Indices into `[open, high, low, close]`.
    pub fn indices(self) -> &'static [usize] {
        match self {
            Channels::Close => &[3],
            Channels::Ohlc => &[0, 1, 2, 3],
        }
    }

    pub fn from_count(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Channels::Close),
            4 => Ok(Channels::Ohlc),
            _ => Err(CoreError::Config(format!("forecast channels must be 1 or 4, got {d}"))),
        }
    }
}

pub fn samples_file_name(asset: &str, tau: usize) -> String {
    format!("{asset}_{tau}.jsonl")
}
