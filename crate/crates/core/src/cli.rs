//! `synth`, `train`, `evaluate` and `report` over one declarative JSON config.
//!
//! Flags override the config file. The effective config is written as
//! `config.json` into every output directory. Exit codes: 0 success,
//! 1 validation error, 2 runtime failure.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::backbones::BackboneKind;
use crate::config::{prepare, DataSource, PreparedData, RunConfig, SIDECAR_FILE, TEST_FILE, TRAIN_FILE};
use crate::dataio::{write_csv, ColumnConfig, InteractionRecord, ReleaseInterval};
use crate::evaluation::{
    case_study_series, per_interval_series, profile_series, report_from_scores, report_interval_profile, report_prediction_by_interval,
    write_series_csv, MetricReport,
};
use crate::inference::{score_batch, write_scores_csv, Policy, ScoredExample};
use crate::synthetic::{generate_world, simulate_logs, Grouping, Sidecar};
use crate::trainer::{checkpoint, restore, train_with_log, write_log, ModelBundle, TrainError, TrainObjective};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROFILE_FILE: &str = "interval_profile.csv";
pub const SLOPES_FILE: &str = "slopes.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn runtime<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "ldri", version, about = "Recency-deconfounded recommendation: synthesize, train, evaluate, report")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world: train/test CSVs plus the ground-truth sidecar.
    Synth(SynthArgs),
    /// Train a bundle and write the best-validation checkpoint.
    Train(TrainArgs),
    /// Score the test split and write metric reports.
    Evaluate(EvalArgs),
    /// Write plot-ready case-study tables.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; falls back to the config, then `LDRI_OUT`, then `runs`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub backbone: Option<BackboneKind>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// `joint` or `matching-only`.
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<TrainObjective>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated list of policy1, policy2, backbone-only.
    #[arg(long, value_delimiter = ',')]
    pub policy: Vec<Policy>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Comma-separated cutoffs, e.g. `5,10`.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Separately trained backbone-only bundle, scored as `baseline`.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
}

fn parse_objective(s: &str) -> Result<TrainObjective, String> {
    match s {
        "joint" => Ok(TrainObjective::Joint),
        "matching-only" | "matching_only" => Ok(TrainObjective::MatchingOnly),
        other => Err(format!("unknown objective `{other}` (expected joint or matching-only)")),
    }
}

/// Files written by one command.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(outcome) => {
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Validation)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    Ok(config)
}

fn output_dir(config: &RunConfig, common: &CommonArgs) -> Result<PathBuf, CliError> {
    let dir = config.resolve_output(common.out.as_deref());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime("serialize"))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn echo_config(config: &RunConfig, dir: &Path, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = dir.join(CONFIG_FILE);
    write_json(&path, config)?;
    files.push(path);
    Ok(())
}

fn interval_histogram(records: &[InteractionRecord], horizon: usize) -> Vec<usize> {
    let mut h = vec![0; horizon];
    for r in records {
        h[ReleaseInterval::clamped(r.raw_interval_days(), horizon).value()] += 1;
    }
    h
}

fn print_histogram(name: &str, hist: &[usize]) {
    let max = hist.iter().copied().max().unwrap_or(0).max(1);
    println!("{name} impressions by release interval:");
    for (a, &n) in hist.iter().enumerate() {
        let bar = "#".repeat((n * 40).div_ceil(max));
        println!("{a:>4} {n:>8} {bar}");
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<Outcome, CliError> {
    let mut config = load_config(&args.common)?;
    let DataSource::Synthetic { world, validation, .. } = &config.data else {
        return Err(CliError::Validation("synth requires a synthetic data source".into()));
    };
    let mut world = world.clone();
    let validation = *validation;
    if let Some(s) = args.common.seed {
        world.seed = s;
    }
    world.validate().map_err(CliError::Validation)?;
    config.validate().map_err(CliError::Validation)?;
    let dir = output_dir(&config, &args.common)?;

    let truth = generate_world(&world).map_err(CliError::Validation)?;
    let logs = simulate_logs(&truth);
    let cols = ColumnConfig::synthetic();
    let mut files = Vec::new();
    for (name, records) in [(TRAIN_FILE, &logs.train), (TEST_FILE, &logs.test)] {
        let path = dir.join(name);
        let mut w = create(&path)?;
        write_csv(&mut w, records, &cols).map_err(runtime(name))?;
        w.flush().map_err(runtime(name))?;
        files.push(path);
    }
    let side = dir.join(SIDECAR_FILE);
    write_json(&side, &Sidecar::from_truth(&truth))?;
    files.push(side);

    config.data = DataSource::Synthetic { world: world.clone(), validation, dir: Some(dir.clone()) };
    echo_config(&config, &dir, &mut files)?;

    let positives = |r: &[InteractionRecord]| r.iter().filter(|x| x.label == 1).count();
    println!("users {}  videos {}  topics {}", world.n_users, world.n_videos, world.n_topics);
    println!("train impressions {} (positives {})", logs.train.len(), positives(&logs.train));
    println!("test impressions {} (positives {})", logs.test.len(), positives(&logs.test));
    print_histogram("train", &interval_histogram(&logs.train, config.horizon));
    Ok(Outcome { out_dir: dir, files })
}

pub fn cmd_train(args: &TrainArgs) -> Result<Outcome, CliError> {
    let mut config = load_config(&args.common)?;
    if let Some(b) = args.backbone {
        config.backbone = b;
    }
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(o) = args.objective {
        config.objective = o;
    }
    config.validate().map_err(CliError::Validation)?;
    let dir = output_dir(&config, &args.common)?;
    let data = prepare(&config).map_err(CliError::Runtime)?;

    let (bundle, log) = train_with_log(&data.encoded, &data.schema, config.model_config(), config.train_config(), |r| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  matching {:.5}  recency {:.5}  val loss {:.5}  val ndcg@{} {:.5}",
            r.epoch, r.loss, r.matching_loss, r.recency_loss, r.validation_loss, config.validation_k, r.validation_metric
        );
    })
    .map_err(|e| match e {
        TrainError::Config(m) => CliError::Validation(m),
        other => CliError::Runtime(format!("training failed: {other}")),
    })?;

    let mut files = Vec::new();
    let ckpt = dir.join(CHECKPOINT_FILE);
    checkpoint(&bundle, &ckpt).map_err(runtime("checkpoint"))?;
    files.push(ckpt);
    let log_path = dir.join(LOG_FILE);
    let mut w = create(&log_path)?;
    write_log(&mut w, &log).map_err(runtime("log"))?;
    w.flush().map_err(runtime("log"))?;
    files.push(log_path);
    let manifest = dir.join(MANIFEST_FILE);
    write_json(&manifest, &data.manifest)?;
    files.push(manifest);
    echo_config(&config, &dir, &mut files)?;
    if let (Some(e), Some(m)) = (bundle.best_epoch, bundle.best_validation_metric) {
        println!("best epoch {e}  validation ndcg@{} {m:.6}", config.validation_k);
    }
    Ok(Outcome { out_dir: dir, files })
}

/// Config with evaluation flags applied, the restored bundle and the data it scores.
struct EvalContext {
    config: RunConfig,
    policies: Vec<Policy>,
    bundle: ModelBundle,
    data: PreparedData,
    dir: PathBuf,
}

fn eval_context(args: &EvalArgs, default_policies: &[Policy]) -> Result<EvalContext, CliError> {
    let mut config = load_config(&args.common)?;
    if let Some(b) = args.beta {
        config.beta = b;
    }
    if !args.k.is_empty() {
        config.ks = args.k.clone();
    }
    config.validate().map_err(CliError::Validation)?;
    let mut policies = if args.policy.is_empty() { default_policies.to_vec() } else { args.policy.clone() };
    let mut seen = BTreeSet::new();
    policies.retain(|p| seen.insert(*p));

    let bundle = restore(&args.checkpoint).map_err(|e| CliError::Runtime(format!("cannot restore {}: {e}", args.checkpoint.display())))?;
    if bundle.perceptron.is_none() {
        if let Some(p) = policies.iter().find(|p| **p != Policy::BackboneOnly) {
            return Err(CliError::Validation(format!("{p} needs a recency perceptron; {} is a backbone-only bundle", args.checkpoint.display())));
        }
    }
    config.horizon = bundle.model.horizon;
    let data = prepare(&config).map_err(CliError::Runtime)?;
    if data.schema.hash() != bundle.schema_hash {
        return Err(CliError::Validation(format!(
            "schema mismatch: checkpoint {} vs data {}",
            bundle.schema_hash,
            data.schema.hash()
        )));
    }
    let dir = output_dir(&config, &args.common)?;
    Ok(EvalContext { config, policies, bundle, data, dir })
}

fn score(ctx: &EvalContext, bundle: &ModelBundle, policy: Policy) -> Result<Vec<ScoredExample>, CliError> {
    let fusion = ctx.config.fusion(policy);
    fusion.validate().map_err(CliError::Validation)?;
    score_batch(bundle, &ctx.data.encoded.test, &fusion).map_err(runtime("scoring"))
}

pub fn cmd_evaluate(args: &EvalArgs) -> Result<Outcome, CliError> {
    let ctx = eval_context(args, &[RunConfig::default().policy])?;
    let train_ids: BTreeSet<String> = ctx.bundle.schema.video_ids().iter().cloned().collect();
    let mut files = Vec::new();
    for &policy in &ctx.policies {
        let scores = score(&ctx, &ctx.bundle, policy)?;
        let report: MetricReport = report_from_scores(&scores, &ctx.config.fusion(policy), &ctx.config.ks, ctx.bundle.model.horizon, &train_ids)
            .map_err(runtime("evaluation"))?;
        let stem = format!("report_{policy}");
        let json = ctx.dir.join(format!("{stem}.json"));
        write_json(&json, &report)?;
        let text = ctx.dir.join(format!("{stem}.txt"));
        std::fs::write(&text, report.to_text()).map_err(runtime("report"))?;
        let scores_path = ctx.dir.join(format!("scores_{policy}.csv"));
        write_scores_csv(create(&scores_path)?, &scores, policy).map_err(runtime("scores"))?;
        let per_interval = ctx.dir.join(format!("per_interval_{policy}.csv"));
        write_series_csv(create(&per_interval)?, &per_interval_series(&report.per_interval, policy.as_str())).map_err(runtime("per-interval"))?;
        print!("{}", report.to_text());
        files.extend([json, text, scores_path, per_interval]);
    }
    echo_config(&ctx.config, &ctx.dir, &mut files)?;
    Ok(Outcome { out_dir: ctx.dir, files })
}

pub fn cmd_report(args: &ReportArgs) -> Result<Outcome, CliError> {
    let ctx = eval_context(&args.eval, &[Policy::BackboneOnly, Policy::Policy1])?;
    let Some(sidecar) = &ctx.data.sidecar else {
        return Err(CliError::Validation(format!(
            "case-study tables need sensitivity labels: {SIDECAR_FILE} not found next to the data (run `ldri synth` or set a sidecar path)"
        )));
    };
    let classes = sidecar.classes(Grouping::Curve);
    let mut files = Vec::new();

    let profile = report_interval_profile(&ctx.data.encoded.train.examples, ctx.bundle.model.horizon).map_err(runtime("profile"))?;
    let profile_path = ctx.dir.join(PROFILE_FILE);
    write_series_csv(create(&profile_path)?, &profile_series(&profile)).map_err(runtime("profile"))?;
    files.push(profile_path);

    let mut runs: Vec<(String, Vec<ScoredExample>)> = Vec::new();
    for &policy in &ctx.policies {
        runs.push((policy.to_string(), score(&ctx, &ctx.bundle, policy)?));
    }
    if let Some(path) = &args.baseline {
        let base = restore(path).map_err(|e| CliError::Runtime(format!("cannot restore {}: {e}", path.display())))?;
        if base.schema_hash != ctx.bundle.schema_hash {
            return Err(CliError::Validation(format!("schema mismatch between {} and {}", path.display(), args.eval.checkpoint.display())));
        }
        runs.push(("baseline".into(), score(&ctx, &base, Policy::BackboneOnly)?));
    }

    let mut slopes: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (name, scores) in &runs {
        let study = report_prediction_by_interval(scores, &classes).map_err(runtime("case study"))?;
        let path = ctx.dir.join(format!("prediction_by_interval_{name}.csv"));
        write_series_csv(create(&path)?, &case_study_series(&study, "")).map_err(runtime("case study"))?;
        files.push(path);
        for (class, s) in &study.slopes {
            println!("{name:>14} {class:>10} slope {s:+.6}");
        }
        slopes.insert(name.clone(), study.slopes);
    }
    let slopes_path = ctx.dir.join(SLOPES_FILE);
    write_json(&slopes_path, &slopes)?;
    files.push(slopes_path);
    echo_config(&ctx.config, &ctx.dir, &mut files)?;
    Ok(Outcome { out_dir: ctx.dir, files })
}
