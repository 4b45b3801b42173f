//! Acceptance suite. Runs every criterion in order and prints one
//! `[PASS]` or `[FAIL]` line each. Exits nonzero when any criterion fails.

mod counterfactuals;
mod gradients;
mod market;
mod pipeline;
mod shapes;
mod tables;
mod training;
mod triplet;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn check(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        Self::check(false, detail)
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    (1, "gradient checks", gradients::criterion),
    (2, "paper-preset shapes", shapes::criterion),
    (3, "triplet loss analytics", triplet::criterion),
    (4, "alignment oracle", market::alignment),
    (5, "chronological split", market::split),
    (6, "counterfactual sets", counterfactuals::sets),
    (7, "prompt goldens", counterfactuals::prompts),
    (8, "table serialization", tables::criterion),
    (9, "overfit sanity", training::overfit),
    (10, "causal signal", training::causal_signal),
    (11, "alpha=0 sweep equals causal-off", training::alpha_zero),
    (12, "pipeline determinism", pipeline::criterion),
];

/// Core crate test fixtures (archive and goldens).
pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn main() -> ExitCode {
    // A numeric argument runs that criterion alone. Numbers that follow a
    // flag (`--test-threads 1`) are flag values, not criteria.
    let args: Vec<String> = std::env::args().skip(1).collect();
    let only: Option<u32> = args
        .iter()
        .enumerate()
        .filter(|(i, _)| *i == 0 || !args[i - 1].starts_with('-'))
        .find_map(|(_, a)| a.parse().ok());
    let mut failed = 0;
    let mut ran = 0;
    for &(n, name, run) in CRITERIA {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Outcome::fail(format!("panicked: {msg}"))
            });
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {n:>2} {name}: {} ({:.1} s)", outcome.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!outcome.pass);
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
