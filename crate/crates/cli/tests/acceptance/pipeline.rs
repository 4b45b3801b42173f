//! Two full command-line pipeline runs with the same seed.

use std::fs;
use std::path::Path;
use std::process::Command;

use eventcast_core::corpus::read_events;
use eventcast_core::market::write_bars;
use eventcast_core::synthetic::bars_around;

use crate::{fixtures, Outcome};

const COMPARED: [&str; 8] = [
    "events.jsonl",
    "counterfactuals.jsonl",
    "samples/SPX_35.jsonl",
    "runs/train/history.csv",
    "runs/train/params/params.bin",
    "reports/report.csv",
    "reports/report.json",
    "reports/samples.csv",
];

fn eventcast(work: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_eventcast"))
        .arg("--work")
        .arg(work)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn pipeline(work: &Path) -> Result<(), String> {
    let archive = fixtures().join("archive");
    let small = work.join("small.toml");
    fs::write(&small, "[train]\nepochs = 2\nbatch_size = 4\n").map_err(|e| e.to_string())?;
    eventcast(work, &["ingest", archive.to_str().unwrap()])?;
    let events = read_events(&work.join("events.jsonl")).map_err(|e| e.to_string())?;
    let ts: Vec<_> = events.iter().map(|e| e.release_timestamp).collect();
    let bars = bars_around("SPX", &ts, 40, 3).map_err(|e| e.to_string())?;
    write_bars(&work.join("bars/SPX.csv"), &bars).map_err(|e| e.to_string())?;
    eventcast(work, &["--tau", "35", "align"])?;
    eventcast(work, &["--backend", "stub", "augment"])?;
    eventcast(work, &["--config", small.to_str().unwrap(), "--preset", "desk", "--seed", "7", "train"])?;
    eventcast(work, &["eval"])
}

pub fn criterion() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        if let Err(e) = pipeline(dir.path()) {
            return Outcome::fail(e);
        }
    }
    let mut differing = Vec::new();
    for f in COMPARED {
        match (fs::read(a.path().join(f)), fs::read(b.path().join(f))) {
            (Ok(x), Ok(y)) if x == y && !x.is_empty() => {}
            _ => differing.push(f),
        }
    }
    Outcome::check(
        differing.is_empty(),
        if differing.is_empty() {
            format!("ingest, align, augment (stub), train, eval twice with seed 7: {} artifacts byte-identical", COMPARED.len())
        } else {
            format!("differ or missing: {}", differing.join(", "))
        },
    )
}
