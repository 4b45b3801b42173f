//! Archive walking: `archive/<event-type>/<YYYY-MM-DD[_HHMM]>.<ext>`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveTime, TimeZone, Utc};
use chrono_tz::America::New_York;
use rayon::prelude::*;

use super::{normalize_document, parse_event, EventMeta, EventScript, EventType, RawFormat};
use crate::error::{CoreError, Result};

pub const EVENTS_FILE: &str = "events.jsonl";

/// Release time assumed when a file name carries only a date.
const DEFAULT_RELEASE_HHMM: (u32, u32) = (8, 30);

#[derive(Debug, Clone, PartialEq)]
pub struct IngestFailure {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub events: Vec<EventScript>,
    pub failures: Vec<IngestFailure>,
}

/// Parses a document file name into (UTC release time, format, stem).
/// The date and optional `_HHMM` are US Eastern wall-clock time.
pub fn parse_archive_name(file_name: &str) -> Result<(DateTime<Utc>, RawFormat, String)> {
    let (stem, ext) = if let Some(stem) = file_name.strip_suffix(".pdf.txt") {
        (stem, "pdf.txt")
    } else {
        file_name
            .rsplit_once('.')
            .ok_or_else(|| CoreError::Ingest(format!("`{file_name}` has no extension")))?
    };
    let format = RawFormat::from_extension(ext)?;
    let (date_part, time_part) = match stem.split_once('_') {
        Some((d, t)) => (d, Some(t)),
        None => (stem, None),
    };
    let date = NaiveDate::parse_from_str(date_part, "%Y-%m-%d")
        .map_err(|e| CoreError::Ingest(format!("`{file_name}`: bad date: {e}")))?;
    let time = match time_part {
        Some(t) => {
            if t.len() != 4 {
                return Err(CoreError::Ingest(format!("`{file_name}`: time must be HHMM")));
            }
            NaiveTime::parse_from_str(t, "%H%M")
                .map_err(|e| CoreError::Ingest(format!("`{file_name}`: bad time: {e}")))?
        }
        None => NaiveTime::from_hms_opt(DEFAULT_RELEASE_HHMM.0, DEFAULT_RELEASE_HHMM.1, 0).unwrap(),
    };
    let local = New_York
        .from_local_datetime(&date.and_time(time))
        .earliest()
        .ok_or_else(|| {
            CoreError::Ingest(format!("`{file_name}`: local time does not exist in US/Eastern"))
        })?;
    Ok((local.with_timezone(&Utc), format, stem.to_string()))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CoreError::io(dir, e))? {
        out.push(entry.map_err(|e| CoreError::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn load_one(path: &Path, event_type: EventType) -> Result<EventScript> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CoreError::Ingest("non UTF-8 file name".into()))?;
    let (ts, format, stem) = parse_archive_name(name)?;
    let blob = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    let text = normalize_document(&blob, format)?;
    let meta = EventMeta {
        id: format!("{}-{}", event_type.as_str(), stem),
        event_type,
        release_timestamp: ts,
        raw_format: format,
    };
    parse_event(&text, &meta)
}

/// Normalizes every document under `archive`. Unreadable or malformed
/// documents are recorded as failures and skipped. Events come back ordered
/// by release time, then id.
pub fn ingest_archive(archive: &Path) -> Result<IngestReport> {
    if !archive.is_dir() {
        return Err(CoreError::MissingArtifact(archive.to_path_buf()));
    }
    let mut report = IngestReport::default();
    let mut jobs = Vec::new();
    for type_dir in sorted_entries(archive)? {
        if !type_dir.is_dir() {
            continue;
        }
        let dir_name = type_dir.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let event_type = match dir_name.parse::<EventType>() {
            Ok(t) => t,
            Err(e) => {
                report.failures.push(IngestFailure {
                    path: type_dir.clone(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        for file in sorted_entries(&type_dir)? {
            if file.is_file() {
                jobs.push((file, event_type));
            }
        }
    }

    let results: Vec<_> = jobs
        .par_iter()
        .map(|(path, t)| (path.clone(), load_one(path, *t)))
        .collect();

    let mut seen = BTreeSet::new();
    for (path, result) in results {
        match result {
            Ok(event) if !seen.insert(event.id.clone()) => report.failures.push(IngestFailure {
                path,
                message: format!("duplicate event id `{}`", event.id),
            }),
            Ok(event) => report.events.push(event),
            Err(e) => report.failures.push(IngestFailure {
                path,
                message: e.to_string(),
            }),
        }
    }
    for f in &report.failures {
        log::warn!("skipped {}: {}", f.path.display(), f.message);
    }
    report
        .events
        .sort_by(|a, b| (a.release_timestamp, &a.id).cmp(&(b.release_timestamp, &b.id)));
    Ok(report)
}

pub fn write_events(path: &Path, events: &[EventScript]) -> Result<()> {
    crate::io::write_jsonl(path, events)
}

pub fn read_events(path: &Path) -> Result<Vec<EventScript>> {
    let events: Vec<EventScript> = crate::io::read_jsonl(path)?;
    for e in &events {
        e.validate()?;
    }
    Ok(events)
}
