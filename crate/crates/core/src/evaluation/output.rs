//! CSV, JSON and SVG report files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::plot::{line_chart, Series};
use super::{median, EvaluationReport, Knob, SweepRecord};
use crate::error::{CoreError, Result};
use crate::io::{ensure_parent, write_string};
use crate::training::HistoryRow;

/// Writes `rows` as CSV with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_string(path, &s)
}

/// `<stem>.csv` (rows) and `<stem>.json` (metadata and rows) in `dir`.
pub fn write_report(dir: &Path, stem: &str, report: &EvaluationReport) -> Result<()> {
    write_csv(&dir.join(format!("{stem}.csv")), &report.rows)?;
    write_json(&dir.join(format!("{stem}.json")), report)
}

/// Training and validation `L_Time` against optimizer step, one pair of
/// lines per run.
pub fn loss_curves_svg(runs: &[(String, &[HistoryRow])]) -> String {
    let mut series = Vec::new();
    for (name, history) in runs {
        series.push(Series {
            name: format!("{name} train"),
            points: history.iter().map(|r| (r.step as f64, r.train_l_time)).collect(),
        });
        let val: Vec<(f64, f64)> = history
            .iter()
            .filter_map(|r| r.val_l_time.map(|v| (r.step as f64, v)))
            .collect();
        if !val.is_empty() {
            series.push(Series {
                name: format!("{name} validation"),
                points: val,
            });
        }
    }
    line_chart("Loss curves", "step", "L_Time", &series)
}

/// Median test MSE over seeds against knob value, one line per
/// `(asset, pred_len)`.
pub fn sensitivity_svg(records: &[SweepRecord], knob: Knob) -> String {
    let mut groups: BTreeMap<(&str, usize), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.knob == knob) {
        groups
            .entry((r.asset_id.as_str(), r.pred_len))
            .or_default()
            .entry(r.value)
            .or_default()
            .push(r.mse);
    }
    let series: Vec<Series> = groups
        .into_iter()
        .map(|((asset, len), values)| Series {
            name: format!("{asset} {len}"),
            points: values.into_iter().map(|(v, m)| (v as f64, median(&m))).collect(),
        })
        .collect();
    line_chart(&format!("Sensitivity to {}", knob.as_str()), knob.as_str(), "median test MSE", &series)
}
