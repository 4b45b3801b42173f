//! `eventcast`: one subcommand per pipeline stage. Stages exchange files
//! inside a work directory:
//!
//! ```text
//! <work>/events.jsonl              ingest
//! <work>/samples/<asset>_<tau>.jsonl  align (bars from <work>/bars/<asset>.csv)
//! <work>/counterfactuals.jsonl     augment (also rated_events.jsonl)
//! <work>/runs/<run>/               train (config.json, history.csv, params/)
//! <work>/reports/                  eval, ablate, sweep
//! ```

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "eventcast", version, about = "Event-driven market forecasting pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Work directory holding every stage's inputs and outputs.
    #[arg(long, global = true, default_value = ".")]
    pub work: PathBuf,
    /// TOML file with optional `[model]` and `[train]` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["paper", "desk"])]
    pub preset: Option<String>,
    #[arg(long, global = true, value_parser = PossibleValuesParser::new(["35", "70", "140"]).map(|s| s.parse::<usize>().unwrap()))]
    pub tau: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Backend::Stub)]
    pub backend: Backend,
    /// Print the resolved plan and exit without reading or writing data.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Upper bound on concurrent training runs (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Stub,
    Http,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize an archive of release documents into events.jsonl.
    Ingest {
        /// `<archive>/<event-type>/<YYYY-MM-DD[_HHMM]>.<ext>`
        archive: PathBuf,
    },
    /// Cut pre/post windows around every event from each bar file.
    Align {
        /// Directory of `<asset>.csv` bar files (default `<work>/bars`).
        #[arg(long)]
        bars: Option<PathBuf>,
    },
    /// Rate every event and generate its counterfactual rewrites.
    Augment,
    /// Fit a model and write its history and parameters.
    Train(commands::TrainArgs),
    /// Score a trained run on the test split.
    Eval(commands::EvalArgs),
    /// Component or event-type ablation over several seeds.
    Ablate(commands::AblateArgs),
    /// Sensitivity sweep over counterfactual count and regressor depth.
    Sweep(commands::SweepArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Ingest { archive } => commands::ingest(g, archive),
        Command::Align { bars } => commands::align(g, bars.as_deref()),
        Command::Augment => commands::augment(g),
        Command::Train(a) => commands::train(g, a),
        Command::Eval(a) => commands::eval(g, a),
        Command::Ablate(a) => commands::ablate(g, a),
        Command::Sweep(a) => commands::sweep(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error[{}]: {message}", e.class());
            ExitCode::FAILURE
        }
    }
}
