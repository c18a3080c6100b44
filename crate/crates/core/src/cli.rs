//! The `feedalign` command line.
//!
//! Training settings resolve in three layers: built-in defaults, then the
//! JSON file given with `--config`, then command-line flags. The resolved
//! settings are logged before any work starts and echoed into
//! `summary.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, Pairing};
use crate::datasets::{verify_checksums, FileStatus};
use crate::experiment::{self, DatasetKind, RunSummary, SuiteSpec, Variant};
use crate::trainers::{AdamParams, OptimizerKind};

/// Error raised for invalid invocations that clap itself cannot catch; exits with 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "feedalign", version, about = "Train MLPs with backpropagation and feedback alignment, then compare them")]
pub struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset utilities.
    #[command(subcommand)]
    Data(DataCommand),
    /// Train a suite of seeded runs and save their artifacts.
    Train(TrainArgs),
    /// Compute report tables from saved artifacts.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Compare files against a SHA-256 manifest.
    Verify {
        /// JSON object mapping relative file names to hex digests.
        #[arg(long)]
        manifest: PathBuf,
        /// Directory the manifest names are relative to.
        #[arg(long, env = "FEEDALIGN_DATA_DIR", default_value = "data")]
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_dataset)]
    pub dataset: Option<DatasetKind>,
    /// Comma-separated algorithms (bp, dfa, wdfa, fa, usfa, optionally with
    /// an `-adam` suffix) or `all`.
    #[arg(long, value_parser = parse_algos)]
    pub algos: Option<VariantList>,
    /// Seeds as a list and/or inclusive ranges, e.g. `1..10` or `1,4,7..9`.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Option<SeedList>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning rate for one algorithm, e.g. `usfa=0.001`; repeatable.
    #[arg(long = "lr-for", value_parser = parse_lr_for)]
    pub lr_for: Vec<(Variant, f64)>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// `adam` turns every listed algorithm into its Adam variant.
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// Keep only the first N training samples.
    #[arg(long)]
    pub train_subset: Option<usize>,
    /// Root holding `mnist/` and `cifar-10-batches-bin/`.
    #[arg(long, env = "FEEDALIGN_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Verify dataset files against this manifest before training.
    #[arg(long)]
    pub checksums: Option<PathBuf>,
    /// JSON settings file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Concurrent runs (default: all cores). Never affects results.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    None,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Accuracy,
    Stability,
    Cross,
    Layers,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("layer-choice").args(["layer", "all_layers"]))]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub kind: ReportKind,
    /// Directory written by `train --out`.
    #[arg(long)]
    pub artifacts: PathBuf,
    /// Report directory (default: `<artifacts>/reports`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Restrict to one dataset.
    #[arg(long, value_parser = parse_dataset)]
    pub dataset: Option<DatasetKind>,
    /// 0-based layer index for `layers`.
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub all_layers: bool,
    /// Pair only runs with equal seeds in `cross`.
    #[arg(long)]
    pub seed_matched: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantList(pub Vec<Variant>);

#[derive(Debug, Clone, PartialEq)]
pub struct SeedList(pub Vec<u64>);

fn parse_dataset(s: &str) -> Result<DatasetKind, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

pub fn parse_algos(s: &str) -> Result<VariantList, String> {
    let mut out: Vec<Variant> = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part.eq_ignore_ascii_case("all") {
            out.extend(Variant::all());
        } else {
            out.push(part.parse().map_err(|e: crate::Error| e.to_string())?);
        }
    }
    dedup_in_order(&mut out);
    if out.is_empty() {
        return Err("no algorithms given".into());
    }
    Ok(VariantList(out))
}

/// Seeds from comma-separated integers and inclusive ranges `a..b` / `a..=b`.
pub fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |x: &str| x.trim().parse::<u64>().map_err(|_| format!("bad seed '{x}' in '{s}'"));
        if let Some((a, b)) = part.split_once("..") {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty seed range '{part}'"));
            }
            out.extend(a..=b);
        } else {
            out.push(num(part)?);
        }
    }
    dedup_in_order(&mut out);
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(SeedList(out))
}

fn parse_lr_for(s: &str) -> Result<(Variant, f64), String> {
    let (alg, lr) = s.split_once('=').ok_or_else(|| format!("expected ALGORITHM=LR, got '{s}'"))?;
    let v = alg.trim().parse().map_err(|e: crate::Error| e.to_string())?;
    let lr = lr.trim().parse().map_err(|_| format!("bad learning rate in '{s}'"))?;
    Ok((v, lr))
}

fn dedup_in_order<T: PartialEq + Copy>(v: &mut Vec<T>) {
    let mut seen = Vec::with_capacity(v.len());
    v.retain(|x| {
        let new = !seen.contains(x);
        seen.push(*x);
        new
    });
}

/// Settings accepted in a `--config` file; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub dataset: Option<DatasetKind>,
    pub seeds: Option<Vec<u64>>,
    pub algorithms: Option<Vec<Variant>>,
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub learning_rates: BTreeMap<Variant, f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub weight_decay: Option<f64>,
    pub optimizer: Option<OptimizerKind>,
    pub adam: Option<AdamParams>,
    pub train_subset: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Fully resolved training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTrain {
    pub suite: SuiteSpec,
    pub train_subset: Option<usize>,
    pub data_dir: PathBuf,
    pub threads: Option<usize>,
}

/// Applies defaults, then the config file, then flags.
pub fn resolve_train(args: &TrainArgs, file: Option<TrainFileConfig>) -> anyhow::Result<ResolvedTrain> {
    let file = file.unwrap_or_default();
    let mut suite = SuiteSpec::default();
    let c = &mut suite.config;

    if let Some(d) = file.dataset {
        suite.dataset = d;
    }
    if let Some(s) = file.seeds {
        suite.seeds = s;
    }
    if let Some(a) = file.algorithms {
        suite.algorithms = a;
    }
    suite.learning_rates = file.learning_rates;
    c.learning_rate = file.learning_rate.unwrap_or(c.learning_rate);
    c.epochs = file.epochs.unwrap_or(c.epochs);
    c.batch_size = file.batch_size.unwrap_or(c.batch_size);
    c.weight_decay = file.weight_decay.unwrap_or(c.weight_decay);
    c.optimizer = file.optimizer.unwrap_or(c.optimizer);
    c.adam = file.adam.unwrap_or(c.adam);

    if let Some(d) = args.dataset {
        suite.dataset = d;
    }
    if let Some(SeedList(s)) = &args.seeds {
        suite.seeds = s.clone();
    }
    if let Some(VariantList(a)) = &args.algos {
        suite.algorithms = a.clone();
    }
    suite.learning_rates.extend(args.lr_for.iter().copied());
    c.learning_rate = args.lr.unwrap_or(c.learning_rate);
    c.epochs = args.epochs.unwrap_or(c.epochs);
    c.batch_size = args.batch_size.unwrap_or(c.batch_size);
    c.weight_decay = args.weight_decay.unwrap_or(c.weight_decay);
    match args.optimizer {
        Some(OptimizerArg::Adam) => c.optimizer = OptimizerKind::Adam,
        Some(OptimizerArg::None) => c.optimizer = OptimizerKind::None,
        None => {}
    }
    if c.optimizer == OptimizerKind::Adam {
        for v in &mut suite.algorithms {
            v.optimizer = OptimizerKind::Adam;
        }
        dedup_in_order(&mut suite.algorithms);
    }

    suite.validate().map_err(|e| usage(e.to_string()))?;
    if args.threads == Some(0) || file.threads == Some(0) {
        return Err(usage("--threads must be at least 1"));
    }
    Ok(ResolvedTrain {
        suite,
        train_subset: args.train_subset.or(file.train_subset),
        data_dir: args
            .data_dir
            .clone()
            .or(file.data_dir)
            .unwrap_or_else(|| PathBuf::from("data")),
        threads: args.threads.or(file.threads),
    })
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    settings: &'a ResolvedTrain,
    runs: &'a [RunSummary],
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn print_checksum_report(report: &crate::datasets::ChecksumReport) -> bool {
    if report.is_empty() {
        log::warn!("checksum manifest lists no files; nothing verified");
        return true;
    }
    for (path, status) in &report.entries {
        match status {
            FileStatus::Ok => println!("ok        {}", path.display()),
            FileStatus::Missing => println!("MISSING   {}", path.display()),
            FileStatus::Mismatch { expected, actual } => {
                println!("MISMATCH  {} (expected {expected}, got {actual})", path.display())
            }
        }
    }
    report.all_ok()
}

fn cmd_verify(manifest: &Path, dir: &Path) -> anyhow::Result<()> {
    let report = verify_checksums(manifest, dir)?;
    if !print_checksum_report(&report) {
        bail!("checksum verification failed");
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(
                serde_json::from_str::<TrainFileConfig>(&text)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    let resolved = resolve_train(args, file)?;
    log::info!("resolved settings: {}", serde_json::to_string(&resolved)?);

    let dataset = resolved.suite.dataset;
    if let Some(manifest) = &args.checksums {
        let report = verify_checksums(manifest, &resolved.data_dir)?;
        if !print_checksum_report(&report) {
            bail!("dataset files do not match {}", manifest.display());
        }
    }
    let data = dataset
        .load(&resolved.data_dir, resolved.train_subset)
        .with_context(|| format!("loading {dataset} from {}", resolved.data_dir.display()))?;
    log::info!(
        "{dataset}: {} training and {} test samples",
        data.train.len(),
        data.test.len()
    );

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let runs = experiment::run_suite_to_dir(
        &resolved.suite,
        &data,
        &dataset.network_spec(),
        resolved.threads,
        &args.out,
        |r| {
            println!(
                "{} {:<9} seed {:<3} accuracy {:.4}",
                r.dataset,
                r.algorithm.name(),
                r.seed,
                r.test_accuracy
            )
        },
    )?;

    let summary = serde_json::to_string_pretty(&Summary {
        settings: &resolved,
        runs: &runs,
    })?;
    write_file(&args.out.join("summary.json"), &(summary + "\n"))?;
    Ok(())
}

fn report_stem(kind: &str, dataset: Option<&str>, layer: Option<usize>) -> String {
    let mut stem = kind.to_string();
    if let Some(d) = dataset {
        stem = format!("{stem}_{d}");
    }
    if let Some(l) = layer {
        stem = format!("{stem}_layer{l}");
    }
    stem
}

fn emit(out: &Path, stem: &str, csv: &str, json: String) -> anyhow::Result<()> {
    write_file(&out.join(format!("{stem}.csv")), csv)?;
    write_file(&out.join(format!("{stem}.json")), &(json + "\n"))?;
    println!("# {stem}");
    print!("{csv}");
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> anyhow::Result<()> {
    if args.kind == ReportKind::Layers && args.layer.is_none() && !args.all_layers {
        return Err(usage("`analyze layers` needs --layer <INDEX> or --all-layers"));
    }
    let mut artifacts = experiment::load_all(&args.artifacts)
        .with_context(|| format!("reading artifacts under {}", args.artifacts.display()))?;
    if let Some(d) = args.dataset {
        artifacts.retain(|a| a.dataset == d.name());
    }
    if artifacts.is_empty() {
        bail!(
            "no run artifacts found; expected {}/<dataset>/<algorithm>/seed_<i>/manifest.json{}",
            args.artifacts.display(),
            args.dataset.map(|d| format!(" with dataset {d}")).unwrap_or_default()
        );
    }
    let out = args.out.clone().unwrap_or_else(|| args.artifacts.join("reports"));
    let mut datasets: Vec<String> = artifacts.iter().map(|a| a.dataset.clone()).collect();
    datasets.dedup();

    match args.kind {
        ReportKind::Accuracy => {
            let r = analysis::accuracy_table(&artifacts);
            emit(&out, "accuracy", &r.to_csv(), serde_json::to_string_pretty(&r)?)?;
        }
        ReportKind::Stability => {
            let r = analysis::stability_table(&artifacts)?;
            emit(&out, "stability", &r.to_csv(), serde_json::to_string_pretty(&r)?)?;
        }
        ReportKind::Cross => {
            let pairing = if args.seed_matched {
                Pairing::SeedMatched
            } else {
                Pairing::AllPairs
            };
            for d in &datasets {
                let r = analysis::cross_algorithm_table(&artifacts, d, pairing)?;
                let kind = if args.seed_matched { "cross_seed_matched" } else { "cross" };
                emit(&out, &report_stem(kind, Some(d), None), &r.to_csv(), serde_json::to_string_pretty(&r)?)?;
            }
        }
        ReportKind::Layers => {
            for d in &datasets {
                let n_layers = artifacts
                    .iter()
                    .find(|a| &a.dataset == d)
                    .map(|a| a.final_state.num_layers())
                    .unwrap_or(0);
                let layers: Vec<usize> = match args.layer {
                    Some(l) => vec![l],
                    None => (0..n_layers).collect(),
                };
                for l in layers {
                    let r = analysis::layer_similarity_table(&artifacts, d, l)?;
                    emit(
                        &out,
                        &report_stem("layers", Some(d), Some(l)),
                        &r.to_csv(),
                        serde_json::to_string_pretty(&r)?,
                    )?;
                }
            }
        }
    }
    Ok(())
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Data(DataCommand::Verify { manifest, dir }) => cmd_verify(manifest, dir),
        Command::Train(args) => cmd_train(args),
        Command::Analyze(args) => cmd_analyze(args),
    }
}

/// Parses arguments, runs, and maps the outcome to an exit code:
/// 0 on success, 1 on runtime failure, 2 on usage errors.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
