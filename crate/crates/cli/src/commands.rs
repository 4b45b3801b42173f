use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use eventcast_core::corpus::{ingest_archive, read_events, write_events, EventScript, EVENTS_FILE};
use eventcast_core::counterfactual::{
    augment_corpus, AugmentConfig, CounterfactualRecord, HttpBackend, StubBackend, TextGenBackend, COUNTERFACTUALS_FILE,
    DEFAULT_IDENTICAL,
};
use eventcast_core::evaluation::output::{loss_curves_svg, sensitivity_svg, write_csv, write_json, write_report};
use eventcast_core::evaluation::{
    evaluate, persistence_baseline, run_ablation, run_event_type_ablation, run_sensitivity, seeds_from, Knob,
    ReportMeta, RunOptions, Units,
};
use eventcast_core::io::{read_jsonl, require, write_jsonl, write_string};
use eventcast_core::market::{align_all, read_bars, samples_file_name, split_dataset, AlignedSample};
use eventcast_core::model::{Ablation, ModelConfig};
use eventcast_core::training::{self, examples_from_corpus, write_history, TrainConfig, TrainingExample};
use eventcast_core::{CoreError, Result};
use eventcast_numerics::archive;
use serde::{Deserialize, Serialize};

use crate::{Backend, Global};

const SAMPLES_DIR: &str = "samples";
const BARS_DIR: &str = "bars";
const RUNS_DIR: &str = "runs";
const REPORTS_DIR: &str = "reports";
const RATED_EVENTS_FILE: &str = "rated_events.jsonl";
const RUN_CONFIG_FILE: &str = "config.json";

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Run name under `<work>/runs`.
    #[arg(long, default_value = "train")]
    run: String,
    /// Masked-reconstruction pretraining of the series encoder first.
    #[arg(long)]
    pretrain: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, default_value = "train")]
    run: String,
    /// Report errors in price units instead of normalized units.
    #[arg(long)]
    original_units: bool,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Components to switch off, e.g. `textual,causal`; repeat for several
    /// variants. The full model is always run as well. Default: each
    /// component alone, then the full model.
    #[arg(long = "off")]
    off: Vec<String>,
    /// Ablate over event types instead of components.
    #[arg(long)]
    by_event_type: bool,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long)]
    pretrain: bool,
    #[arg(long)]
    original_units: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 5, 10, 15])]
    alphas: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 6])]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long)]
    pretrain: bool,
}

#[derive(Serialize, Deserialize)]
struct RunConfig {
    model: ModelConfig,
    train: TrainConfig,
}

#[derive(Serialize)]
struct Plan<'a> {
    command: &'a str,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    settings: BTreeMap<&'a str, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a ModelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<&'a TrainConfig>,
}

impl Plan<'_> {
    fn print(&self) -> Result<()> {
        println!("{}", serde_json::to_string_pretty(self)?);
        Ok(())
    }
}

fn json(v: impl Serialize) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Model and training configs from the preset, then the config file, then
/// the `--preset`, `--tau` and `--seed` flags.
fn resolve(g: &Global) -> Result<(ModelConfig, TrainConfig)> {
    let mut file = toml::Table::new();
    if let Some(path) = &g.config {
        require(path)?;
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        file = text
            .parse()
            .map_err(|e: toml::de::Error| CoreError::Config(format!("{}: {}", path.display(), e.message())))?;
    }
    let mut section = |name: &str| -> Result<toml::Table> {
        let mut t = match file.remove(name) {
            None => toml::Table::new(),
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(CoreError::Config(format!("`{name}` must be a table"))),
        };
        if let Some(p) = &g.preset {
            t.insert("preset".into(), toml::Value::String(p.clone()));
        }
        Ok(t)
    };
    let (model_t, train_t) = (section("model")?, section("train")?);
    if let Some(k) = file.keys().next() {
        return Err(CoreError::Config(format!("unknown config section `{k}`")));
    }
    let mut cfg = ModelConfig::from_toml(&model_t)?;
    let mut tc = TrainConfig::from_toml(&train_t)?;
    if let Some(tau) = g.tau {
        cfg = cfg.with_tau(tau);
    }
    if let Some(seed) = g.seed {
        tc.seed = seed;
    }
    cfg.validate()?;
    tc.validate()?;
    Ok((cfg, tc))
}

fn sample_files(g: &Global, tau: usize) -> Result<Vec<PathBuf>> {
    let dir = g.work.join(SAMPLES_DIR);
    require(&dir)?;
    let suffix = format!("_{tau}.jsonl");
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| CoreError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(&suffix)))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CoreError::MissingArtifact(dir.join(format!("*{suffix}"))));
    }
    Ok(files)
}

fn corpus_inputs(g: &Global) -> Vec<PathBuf> {
    vec![
        g.work.join(EVENTS_FILE),
        g.work.join(COUNTERFACTUALS_FILE),
        g.work.join(SAMPLES_DIR),
    ]
}

fn load_examples(g: &Global, cfg: &ModelConfig) -> Result<Vec<TrainingExample>> {
    let events = read_events(&g.work.join(EVENTS_FILE))?;
    let records: Vec<CounterfactualRecord> = read_jsonl(&g.work.join(COUNTERFACTUALS_FILE))?;
    let mut samples: Vec<AlignedSample> = Vec::new();
    for f in sample_files(g, cfg.input_len)? {
        samples.extend(read_jsonl::<AlignedSample>(&f)?);
    }
    let examples = examples_from_corpus(&events, &records, &samples, DEFAULT_IDENTICAL, cfg)?;
    log::info!("{} examples from {} events", examples.len(), events.len());
    Ok(examples)
}

fn options(g: &Global, pretrain: bool, original_units: bool) -> RunOptions {
    RunOptions {
        pretrain,
        units: if original_units { Units::Original } else { Units::Normalized },
        workers: g.workers,
    }
}

pub fn ingest(g: &Global, archive_dir: &Path) -> Result<()> {
    let out = g.work.join(EVENTS_FILE);
    if g.dry_run {
        return Plan {
            command: "ingest",
            inputs: vec![archive_dir.to_path_buf()],
            outputs: vec![out],
            settings: BTreeMap::new(),
            model: None,
            train: None,
        }
        .print();
    }
    let report = ingest_archive(archive_dir)?;
    if report.events.is_empty() {
        return Err(CoreError::Ingest(format!(
            "no events found under {} ({} unreadable)",
            archive_dir.display(),
            report.failures.len()
        )));
    }
    write_events(&out, &report.events)?;
    let mut by_type: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &report.events {
        *by_type.entry(e.event_type.as_str()).or_default() += 1;
    }
    println!("{} events, {} skipped -> {}", report.events.len(), report.failures.len(), out.display());
    for (t, n) in by_type {
        println!("  {t}: {n}");
    }
    Ok(())
}

pub fn align(g: &Global, bars: Option<&Path>) -> Result<()> {
    let bars = bars.map_or_else(|| g.work.join(BARS_DIR), Path::to_path_buf);
    let tau = g.tau.unwrap_or(35);
    let events_path = g.work.join(EVENTS_FILE);
    if g.dry_run {
        return Plan {
            command: "align",
            inputs: vec![events_path, bars],
            outputs: vec![g.work.join(SAMPLES_DIR).join(samples_file_name("<asset>", tau))],
            settings: BTreeMap::from([("tau", json(tau))]),
            model: None,
            train: None,
        }
        .print();
    }
    let events = read_events(&events_path)?;
    require(&bars)?;
    let mut files: Vec<PathBuf> = fs::read_dir(&bars)
        .map_err(|e| CoreError::io(&bars, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CoreError::MissingArtifact(bars.join("*.csv")));
    }
    let mut total = 0;
    for f in files {
        let asset = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let series = read_bars(&f, &asset)?;
        let (samples, failed) = align_all(&series, &events, tau);
        for (id, e) in &failed {
            log::warn!("{asset}: {id} not aligned: {e}");
        }
        let out = g.work.join(SAMPLES_DIR).join(samples_file_name(&asset, tau));
        write_jsonl(&out, &samples)?;
        println!("{asset}: {} samples, {} skipped -> {}", samples.len(), failed.len(), out.display());
        total += samples.len();
    }
    if total == 0 {
        return Err(CoreError::Alignment(format!("no event could be aligned at tau {tau}")));
    }
    Ok(())
}

fn backend(kind: Backend) -> Result<Box<dyn TextGenBackend>> {
    Ok(match kind {
        Backend::Stub => Box::new(StubBackend),
        Backend::Http => Box::new(HttpBackend::from_env()?),
    })
}

pub fn augment(g: &Global) -> Result<()> {
    let events_path = g.work.join(EVENTS_FILE);
    let out = g.work.join(COUNTERFACTUALS_FILE);
    let rated = g.work.join(RATED_EVENTS_FILE);
    let cfg = AugmentConfig::default();
    if g.dry_run {
        return Plan {
            command: "augment",
            inputs: vec![events_path],
            outputs: vec![out, rated],
            settings: BTreeMap::from([("backend", json(g.backend)), ("augment", json(cfg))]),
            model: None,
            train: None,
        }
        .print();
    }
    let events: Vec<EventScript> = read_events(&events_path)?;
    let backend = backend(g.backend)?;
    let result = augment_corpus(&events, backend.as_ref(), cfg);
    for (id, target, message) in &result.failures {
        match target {
            Some(t) => log::warn!("{id} -> {t}: {message}"),
            None => log::warn!("{id}: {message}"),
        }
    }
    if result.records.is_empty() {
        return Err(CoreError::Generation {
            chunk: None,
            message: format!("no counterfactuals generated ({} failures)", result.failures.len()),
        });
    }
    write_jsonl(&out, &result.records)?;
    write_events(&rated, &result.events)?;
    println!(
        "{} counterfactuals for {} events, {} failures -> {}",
        result.records.len(),
        events.len(),
        result.failures.len(),
        out.display()
    );
    Ok(())
}

pub fn train(g: &Global, a: &TrainArgs) -> Result<()> {
    let (cfg, tc) = resolve(g)?;
    let dir = g.work.join(RUNS_DIR).join(&a.run);
    if g.dry_run {
        return Plan {
            command: "train",
            inputs: corpus_inputs(g),
            outputs: vec![dir.join(RUN_CONFIG_FILE), dir.join("history.csv"), dir.join("params")],
            settings: BTreeMap::from([("pretrain", json(a.pretrain))]),
            model: Some(&cfg),
            train: Some(&tc),
        }
        .print();
    }
    let data = split_dataset(load_examples(g, &cfg)?)?;
    let (n_train, n_val, n_test) = data.sizes();
    log::info!("split {n_train}/{n_val}/{n_test}");
    let outcome = training::fit(&data, &cfg, &tc, a.pretrain)?;
    write_json(&dir.join(RUN_CONFIG_FILE), &RunConfig { model: cfg, train: tc })?;
    write_history(&dir.join("history.csv"), &outcome.history)?;
    archive::save(&outcome.params, &dir.join("params"))?;
    write_string(&dir.join("loss_curves.svg"), &loss_curves_svg(&[(a.run.clone(), &outcome.history)]))?;
    println!(
        "{} steps, best epoch {}, best validation L_Time {} -> {}",
        outcome.steps,
        outcome.best_epoch.map_or("-".into(), |e| e.to_string()),
        outcome.best_val.map_or("-".into(), |v| format!("{v:.6}")),
        dir.display()
    );
    Ok(())
}

pub fn eval(g: &Global, a: &EvalArgs) -> Result<()> {
    let dir = g.work.join(RUNS_DIR).join(&a.run);
    let config_path = dir.join(RUN_CONFIG_FILE);
    let params_dir = dir.join("params");
    let reports = g.work.join(REPORTS_DIR);
    if g.dry_run {
        let mut inputs = corpus_inputs(g);
        inputs.extend([config_path, params_dir]);
        return Plan {
            command: "eval",
            inputs,
            outputs: vec![reports.join("report.csv"), reports.join("report.json"), reports.join("samples.csv")],
            settings: BTreeMap::from([("original_units", json(a.original_units))]),
            model: None,
            train: None,
        }
        .print();
    }
    require(&config_path)?;
    require(&params_dir.join(archive::PAYLOAD_FILE))?;
    let text = fs::read_to_string(&config_path).map_err(|e| CoreError::io(&config_path, e))?;
    let RunConfig { model: cfg, train: tc } = serde_json::from_str(&text)?;
    let params = archive::load(&params_dir)?;
    let test = split_dataset(load_examples(g, &cfg)?)?.test;
    let units = if a.original_units { Units::Original } else { Units::Normalized };
    let meta = ReportMeta::new(&cfg, &tc, &test, units)?;
    let mut ev = evaluate(&params, &cfg, &test, &cfg.ablation.label(), meta.clone())?;
    let baseline = persistence_baseline(&test, meta);
    ev.report.merge(baseline.report);
    write_report(&reports, "report", &ev.report)?;
    write_csv(&reports.join("samples.csv"), &ev.samples)?;
    for r in &ev.report.rows {
        println!("{} {} {}: MSE {:.6} MAE {:.6} ({} samples)", r.variant, r.asset_id, r.pred_len, r.mse, r.mae, r.samples);
    }
    Ok(())
}

pub fn ablate(g: &Global, a: &AblateArgs) -> Result<()> {
    let (cfg, tc) = resolve(g)?;
    let variants = if a.off.is_empty() {
        Ablation::table_rows()
    } else {
        let mut v = a.off.iter().map(|s| Ablation::parse_off_list(s)).collect::<Result<Vec<_>>>()?;
        if !v.contains(&Ablation::FULL) {
            v.push(Ablation::FULL);
        }
        v
    };
    let seeds = seeds_from(tc.seed, a.seeds);
    let reports = g.work.join(REPORTS_DIR);
    let stem = if a.by_event_type { "event_types" } else { "ablation" };
    if g.dry_run {
        let labels: Vec<String> = variants.iter().map(Ablation::label).collect();
        let mut settings = BTreeMap::from([("seeds", json(&seeds)), ("by_event_type", json(a.by_event_type))]);
        if !a.by_event_type {
            settings.insert("variants", json(labels));
        }
        return Plan {
            command: "ablate",
            inputs: corpus_inputs(g),
            outputs: vec![
                reports.join(format!("{stem}.csv")),
                reports.join(format!("{stem}.json")),
                reports.join(format!("{stem}_runs.csv")),
            ],
            settings,
            model: Some(&cfg),
            train: Some(&tc),
        }
        .print();
    }
    let examples = load_examples(g, &cfg)?;
    let opts = options(g, a.pretrain, a.original_units);
    if a.by_event_type {
        let report = run_event_type_ablation(&cfg, &tc, &examples, &seeds, &opts)?;
        write_csv(&reports.join("event_types.csv"), &report.rows)?;
        write_json(&reports.join("event_types.json"), &report)?;
        write_csv(&reports.join("event_types_runs.csv"), &report.records)?;
        for r in &report.rows {
            let fmt = |v: Option<f64>, m: &str| v.map_or("-".into(), |v| format!("{v:.6}{m}"));
            println!(
                "{} {}: MSE {} MAE {}{}",
                r.selection,
                r.pred_len,
                fmt(r.mse, &r.mse_marker),
                fmt(r.mae, &r.mae_marker),
                r.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default()
            );
        }
        return Ok(());
    }
    let data = split_dataset(examples)?;
    let out = run_ablation(&cfg, &tc, &variants, &data, &seeds, &opts)?;
    write_report(&reports, "ablation", &out.report)?;
    write_csv(&reports.join("ablation_runs.csv"), &out.records)?;
    let curves: Vec<(String, &[_])> = out
        .runs
        .iter()
        .filter(|r| r.seed == seeds[0])
        .map(|r| (r.variant.clone(), r.outcome.history.as_slice()))
        .collect();
    write_string(&reports.join("ablation_loss_curves.svg"), &loss_curves_svg(&curves))?;
    for r in &out.report.rows {
        println!("{} {} {}: MSE {:.6} MAE {:.6}", r.variant, r.asset_id, r.pred_len, r.mse, r.mae);
    }
    Ok(())
}

pub fn sweep(g: &Global, a: &SweepArgs) -> Result<()> {
    let (cfg, tc) = resolve(g)?;
    let seeds = seeds_from(tc.seed, a.seeds);
    let reports = g.work.join(REPORTS_DIR);
    if g.dry_run {
        return Plan {
            command: "sweep",
            inputs: corpus_inputs(g),
            outputs: vec![
                reports.join("sweep.csv"),
                reports.join("sensitivity_alpha.svg"),
                reports.join("sensitivity_k.svg"),
            ],
            settings: BTreeMap::from([("alphas", json(&a.alphas)), ("ks", json(&a.ks)), ("seeds", json(&seeds))]),
            model: Some(&cfg),
            train: Some(&tc),
        }
        .print();
    }
    let data = split_dataset(load_examples(g, &cfg)?)?;
    let out = run_sensitivity(&cfg, &tc, &a.alphas, &a.ks, &data, &seeds, &options(g, a.pretrain, false))?;
    write_csv(&reports.join("sweep.csv"), &out.records)?;
    for knob in [Knob::Alpha, Knob::K] {
        write_string(
            &reports.join(format!("sensitivity_{}.svg", knob.as_str())),
            &sensitivity_svg(&out.records, knob),
        )?;
    }
    println!("{} sweep records -> {}", out.records.len(), reports.join("sweep.csv").display());
    Ok(())
}
