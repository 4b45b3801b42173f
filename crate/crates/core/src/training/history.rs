//! Per-step loss history, `history.csv`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One optimizer step. `val_l_time` is set on the last step of each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub epoch: usize,
    pub train_l_time: f64,
    pub l_causal: f64,
    pub l_total: f64,
    pub val_l_time: Option<f64>,
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    crate::io::ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        w.write_record(["step", "epoch", "train_l_time", "l_causal", "l_total", "val_l_time"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| CoreError::Format(format!("{}: {e}", path.display()))))
        .collect()
}
