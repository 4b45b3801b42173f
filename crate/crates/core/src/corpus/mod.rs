//! Macroeconomic release documents: types, normalization and ingestion.

mod ingest;
mod normalize;
mod table;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub use ingest::{
    ingest_archive, parse_archive_name, read_events, write_events, IngestFailure, IngestReport,
    EVENTS_FILE,
};
pub use normalize::{normalize_document, normalize_whitespace};
pub use table::{parse_table, serialize_table, StructuredTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventType {
    #[serde(rename = "FOMC")]
    Fomc,
    UnemploymentInsuranceClaims,
    EmploymentSituation,
    #[serde(rename = "GDPAdvance")]
    GdpAdvance,
    #[serde(rename = "CPIReport")]
    CpiReport,
    #[serde(rename = "PPIReport")]
    PpiReport,
}

impl EventType {
    pub const ALL: [EventType; 6] = [
        EventType::Fomc,
        EventType::UnemploymentInsuranceClaims,
        EventType::EmploymentSituation,
        EventType::GdpAdvance,
        EventType::CpiReport,
        EventType::PpiReport,
    ];

    /// Serialized name, also the archive directory name.
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Fomc => "FOMC",
            EventType::UnemploymentInsuranceClaims => "UnemploymentInsuranceClaims",
            EventType::EmploymentSituation => "EmploymentSituation",
            EventType::GdpAdvance => "GDPAdvance",
            EventType::CpiReport => "CPIReport",
            EventType::PpiReport => "PPIReport",
        }
    }

    /// Human-readable report name substituted into prompts.
    pub fn report_name(self) -> &'static str {
        match self {
            EventType::Fomc => "FOMC Minutes",
            EventType::UnemploymentInsuranceClaims => "Unemployment Insurance Claims",
            EventType::EmploymentSituation => "Employment Situation",
            EventType::GdpAdvance => "GDP Advance",
            EventType::CpiReport => "CPI",
            EventType::PpiReport => "PPI",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap_or(0)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        EventType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| CoreError::Config(format!("unknown event type `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RawFormat {
    #[serde(rename = "html")]
    Html,
    #[serde(rename = "pdf-text")]
    PdfText,
    #[serde(rename = "txt")]
    Txt,
}

impl RawFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            RawFormat::Html => "html",
            RawFormat::PdfText => "pdf-text",
            RawFormat::Txt => "txt",
        }
    }

    /// Maps a file extension (`html`, `htm`, `txt`, `pdftxt`, `pdf.txt`).
    pub fn from_extension(ext: &str) -> Result<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "html" | "htm" => Ok(RawFormat::Html),
            "txt" => Ok(RawFormat::Txt),
            "pdftxt" | "pdf.txt" => Ok(RawFormat::PdfText),
            other => Err(CoreError::Config(format!("unknown document format `{other}`"))),
        }
    }
}

impl FromStr for RawFormat {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "html" => Ok(RawFormat::Html),
            "pdf-text" => Ok(RawFormat::PdfText),
            "txt" => Ok(RawFormat::Txt),
            other => Err(CoreError::Config(format!("unknown format tag `{other}`"))),
        }
    }
}

/// One normalized release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventScript {
    pub id: String,
    #[serde(rename = "type")]
    pub event_type: EventType,
    pub release_timestamp: DateTime<Utc>,
    pub raw_format: RawFormat,
    pub text: String,
    pub sentiment: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventMeta {
    pub id: String,
    pub event_type: EventType,
    pub release_timestamp: DateTime<Utc>,
    pub raw_format: RawFormat,
}

pub fn earliest_release() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(1993, 1, 1, 0, 0, 0).unwrap()
}

pub fn latest_release() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap()
}

fn check_timestamp(ts: DateTime<Utc>) -> Result<()> {
    if ts < earliest_release() || ts > latest_release() {
        return Err(CoreError::Ingest(format!(
            "release timestamp {} outside [1993-01-01, 2025-01-01]",
            ts.to_rfc3339()
        )));
    }
    Ok(())
}

/// Builds an event record from normalized text. Sentiment starts unset.
pub fn parse_event(text: &str, meta: &EventMeta) -> Result<EventScript> {
    check_timestamp(meta.release_timestamp)?;
    if text.trim().is_empty() {
        return Err(CoreError::Ingest(format!("event `{}` has empty text", meta.id)));
    }
    if meta.id.is_empty() {
        return Err(CoreError::Ingest("event id is empty".into()));
    }
    Ok(EventScript {
        id: meta.id.clone(),
        event_type: meta.event_type,
        release_timestamp: meta.release_timestamp,
        raw_format: meta.raw_format,
        text: text.to_string(),
        sentiment: None,
    })
}

impl EventScript {
    pub fn validate(&self) -> Result<()> {
        check_timestamp(self.release_timestamp)?;
        if self.text.trim().is_empty() {
            return Err(CoreError::Ingest(format!("event `{}` has empty text", self.id)));
        }
        if let Some(s) = self.sentiment {
            if s > 10 {
                return Err(CoreError::Range(s as i64));
            }
        }
        Ok(())
    }

    pub fn meta(&self) -> EventMeta {
        EventMeta {
            id: self.id.clone(),
            event_type: self.event_type,
            release_timestamp: self.release_timestamp,
            raw_format: self.raw_format,
        }
    }
}
