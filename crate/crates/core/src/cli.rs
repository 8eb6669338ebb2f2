//! Batch entry points behind the `restopo` binary: dataset generation,
//! training, evaluation, shuffle audits, localization, ablation grids and
//! report collation.
//!
//! Every command writes into one output directory and finishes with
//! `manifest.json`, which lists the settings, the input files and every
//! emitted file with its SHA-256. Nothing time- or host-dependent is
//! written, so reruns with the same flags produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bagstore::{load_dataset, save_dataset, BagDataset, Label, TaskKind};
use crate::diagnostics::{
    audit_svg, gradient_trace_svg, shuffle_audit, verify_prop1, verify_prop2, AuditCurve, BoundReport,
    DEFAULT_FRACTIONS,
};
use crate::error::{Error, Result};
use crate::localize::{localize_scored, scores_csv, LocalizationReport};
use crate::synthbench::{generate, partition, Bench, BenchConfig};
use crate::trainer::{
    binary_score, evaluate, load_checkpoint, save_checkpoint, survival_risk, train_variant, ModelState, TrainConfig,
    TrainLog, Variant,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const THREADS_ENV: &str = "RESTOPO_THREADS";

#[derive(Parser, Debug)]
#[command(name = "restopo", version, about = "Two-stream MIL with a shuffle-constrained topological residual")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic benchmark datasets (train/val/test RTMB files)
    Gen(GenArgs),
    /// Train one variant and write a checkpoint plus step and epoch logs
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Evaluate a checkpoint under increasing coordinate shuffles
    #[command(name = "audit-shuffle")]
    AuditShuffle(AuditArgs),
    /// Patch-level localization: Dice and FROC against key instances
    Localize(LocalizeArgs),
    /// Train a variant x seed grid and tabulate test metrics
    Ablate(AblateArgs),
    /// Collate run directories into one summary with SVG charts
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory, created if missing
    #[arg(long)]
    pub out: PathBuf,
    /// File of key=value lines; command-line settings take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra key=value settings, applied last
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Comma-separated benchmarks: a, b, survival
    #[arg(long, default_value = "b")]
    pub bench: String,
    /// Number of training bags
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Shuffle seeds per fraction
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated shuffle fractions
    #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
    pub fractions: String,
    /// Curve label; defaults to the model variant
    #[arg(long)]
    pub tag: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Bags used to select the binarization threshold
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Class whose evidence is scored
    #[arg(long, default_value_t = 1)]
    pub target: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated variant names; defaults to the whole registry
    #[arg(long)]
    pub variants: Option<String>,
    /// Seeds per variant, counted up from the configured seed
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directories to collate (searched recursively)
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Resolved invocation: the command, its named inputs, the ordered
/// settings (config file first, then flags, then overrides) and the
/// output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub inputs: Vec<(String, PathBuf)>,
    pub settings: Vec<(String, String)>,
    pub out: PathBuf,
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got {s:?}")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl RunConfig {
    fn new(command: &str, common: &Common, flags: Vec<(&str, String)>) -> Result<Self> {
        let mut settings = Vec::new();
        if let Some(path) = &common.config {
            if !path.exists() {
                return Err(Error::MissingInput(path.clone()));
            }
            settings.extend(parse_kv(&fs::read_to_string(path)?)?);
        }
        settings.extend(flags.into_iter().map(|(k, v)| (k.to_string(), v)));
        for o in &common.overrides {
            settings.push(parse_override(o)?);
        }
        Ok(RunConfig {
            command: command.to_string(),
            inputs: Vec::new(),
            settings,
            out: common.out.clone(),
        })
    }

    fn input(mut self, name: &str, path: Option<&Path>) -> Self {
        if let Some(p) = path {
            self.inputs.push((name.to_string(), p.to_path_buf()));
        }
        self
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (k, v) in &self.settings {
            if !TrainConfig::KEYS.contains(&k.as_str()) {
                return Err(self.unknown(k));
            }
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bench_config(&self) -> Result<BenchConfig> {
        let mut cfg = BenchConfig::default();
        for (k, v) in &self.settings {
            if !BenchConfig::KEYS.contains(&k.as_str()) {
                return Err(self.unknown(k));
            }
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Commands without tunable settings reject every key.
    pub fn no_settings(&self) -> Result<()> {
        match self.settings.first() {
            Some((k, _)) => Err(self.unknown(k)),
            None => Ok(()),
        }
    }

    fn unknown(&self, key: &str) -> Error {
        Error::Config(format!("unknown key {key:?} for command {}", self.command))
    }
}

/// Caps the global thread pool at `RESTOPO_THREADS` when it is set.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub settings: Vec<(String, String)>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

/// All regular files under `dir`, sorted, as paths relative to `dir`.
fn walk(dir: &Path) -> Result<Vec<PathBuf>> {
    fn go(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                go(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).expect("walked path is under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    go(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

fn entry(path: &Path, label: String) -> Result<FileEntry> {
    let bytes = fs::read(path)?;
    Ok(FileEntry {
        path: label,
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Hashes the inputs and every file under the output directory into
/// `manifest.json`.
pub fn write_manifest(run: &RunConfig) -> Result<RunManifest> {
    let inputs = run
        .inputs
        .iter()
        .map(|(name, p)| entry(p, format!("{name}:{}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let outputs = walk(&run.out)?
        .into_iter()
        .filter(|p| p != Path::new(MANIFEST_FILE))
        .map(|p| entry(&run.out.join(&p), p.to_string_lossy().replace('\\', "/")))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        command: run.command.clone(),
        settings: run.settings.clone(),
        inputs,
        outputs,
    };
    write_json(&run.out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))
}

pub fn metric_name(task: TaskKind, classes: usize) -> &'static str {
    match (task, classes) {
        (TaskKind::Survival, _) => "c_index",
        (TaskKind::Classification, 2) => "auc",
        _ => "macro_auc",
    }
}

/// Compact form of the residual-gating check for summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub steps_checked: usize,
    pub extension_steps: usize,
    pub violations: usize,
    pub max_relative_violation: f64,
    pub passes: bool,
}

/// What `train` and each `ablate` cell record in `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: String,
    pub seed: u64,
    pub task: String,
    pub classes: usize,
    pub metric: String,
    pub final_val_metric: Option<f64>,
    pub test_metric: Option<f64>,
    pub steps: usize,
    pub epochs: usize,
    pub gate: Option<GateSummary>,
    pub stage2_bound: Option<BoundReport>,
    pub config: BTreeMap<String, String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn task_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Classification => "classification",
        TaskKind::Survival => "survival",
    }
}

/// Trains `cfg` and writes `model.rtmc`, `steps.csv`, `epochs.csv`,
/// `config.txt` and `summary.json` into `dir`.
fn train_into(
    dir: &Path,
    train: &BagDataset,
    val: Option<&BagDataset>,
    test: Option<&BagDataset>,
    cfg: &TrainConfig,
) -> Result<RunSummary> {
    create_dir(dir)?;
    let (state, log) = train_variant(train, val, cfg)?;
    save_checkpoint(&state, dir.join("model.rtmc"))?;
    fs::write(dir.join("steps.csv"), log.steps_csv())?;
    fs::write(dir.join("epochs.csv"), log.epochs_csv())?;
    let kv = cfg.to_kv();
    fs::write(dir.join("config.txt"), &kv)?;
    let gate = verify_prop1(&log.steps).ok().map(|r| GateSummary {
        steps_checked: r.steps_checked,
        extension_steps: r.extension_steps,
        violations: r.violations,
        max_relative_violation: r.max_relative_violation,
        passes: r.passes,
    });
    let summary = RunSummary {
        variant: cfg.variant.name().to_string(),
        seed: cfg.seed,
        task: task_name(state.task).to_string(),
        classes: state.classes,
        metric: metric_name(state.task, state.classes).to_string(),
        final_val_metric: log.epochs.last().and_then(|e| finite(e.val_metric)),
        test_metric: test.map(|t| evaluate(&state, t)).transpose()?,
        steps: log.steps.len(),
        epochs: log.epochs.len(),
        gate,
        stage2_bound: verify_prop2(&log.epochs).ok(),
        config: parse_kv(&kv)?.into_iter().collect(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn cmd_gen(args: &GenArgs) -> Result<RunConfig> {
    let mut flags = Vec::new();
    if let Some(n) = args.n {
        flags.push(("n_train", n.to_string()));
    }
    if let Some(s) = args.seed {
        flags.push(("seed", s.to_string()));
    }
    let run = RunConfig::new("gen", &args.common, flags)?;
    let cfg = run.bench_config()?;
    let benches = args
        .bench
        .split(',')
        .map(|b| Bench::parse(b.trim()))
        .collect::<Result<Vec<_>>>()?;
    create_dir(&run.out)?;
    for bench in benches {
        let ds = generate(bench, &cfg)?;
        let parts = partition(&ds, &cfg);
        for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
            save_dataset(part, run.out.join(format!("{}_{name}.rtmb", bench.name())))?;
        }
        fs::write(run.out.join(format!("{}.manifest.txt", bench.name())), cfg.manifest(bench))?;
    }
    Ok(run)
}

fn load_opt(path: Option<&PathBuf>) -> Result<Option<BagDataset>> {
    path.map(load_dataset).transpose()
}

fn cmd_train(args: &TrainArgs) -> Result<RunConfig> {
    let mut flags = Vec::new();
    if let Some(v) = &args.variant {
        flags.push(("variant", v.clone()));
    }
    if let Some(s) = args.seed {
        flags.push(("seed", s.to_string()));
    }
    let run = RunConfig::new("train", &args.common, flags)?
        .input("train", Some(&args.train))
        .input("val", args.val.as_deref())
        .input("test", args.test.as_deref());
    let cfg = run.train_config()?;
    let train = load_dataset(&args.train)?;
    let val = load_opt(args.val.as_ref())?;
    let test = load_opt(args.test.as_ref())?;
    train_into(&run.out, &train, val.as_ref(), test.as_ref(), &cfg)?;
    Ok(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub variant: String,
    pub task: String,
    pub metric: String,
    pub value: f64,
    pub bags: usize,
}

fn label_text(label: &Label) -> String {
    match *label {
        Label::Class(c) => c.to_string(),
        Label::Survival {
            interval,
            event_observed,
            time,
        } => format!("{interval}:{}:{time}", event_observed as u8),
    }
}

/// Headline per-bag score: the logit margin for binary tasks, summed
/// hazards for survival, the arg-max class otherwise.
fn bag_score(model: &ModelState, logits: &[f64]) -> f64 {
    match (model.task, model.classes) {
        (TaskKind::Survival, _) => survival_risk(logits),
        (TaskKind::Classification, 2) => binary_score(logits),
        _ => logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map_or(0.0, |(i, _)| i as f64),
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<RunConfig> {
    let run = RunConfig::new("eval", &args.common, Vec::new())?
        .input("model", Some(&args.model))
        .input("data", Some(&args.data));
    run.no_settings()?;
    let model = load_checkpoint(&args.model)?;
    let data = load_dataset(&args.data)?;
    create_dir(&run.out)?;
    let logits = model.predict(&data.bags)?;
    let labels: Vec<Label> = data.bags.iter().map(|b| b.label).collect();
    let value = crate::trainer::primary_metric(model.task, model.classes, &logits, &labels)?;
    let mut csv = String::from("bag_id,label,score");
    for c in 0..model.classes {
        csv.push_str(&format!(",logit_{c}"));
    }
    csv.push('\n');
    for (bag, l) in data.bags.iter().zip(&logits) {
        csv.push_str(&format!("{},{},{}", bag.id, label_text(&bag.label), bag_score(&model, l)));
        for v in l {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    fs::write(run.out.join("predictions.csv"), csv)?;
    let summary = EvalSummary {
        variant: model.variant.name().to_string(),
        task: task_name(model.task).to_string(),
        metric: metric_name(model.task, model.classes).to_string(),
        value,
        bags: data.len(),
    };
    write_json(&run.out.join("eval.json"), &summary)?;
    Ok(run)
}

fn parse_fractions(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(DEFAULT_FRACTIONS.to_vec());
    }
    s.split(',')
        .map(|f| {
            f.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid shuffle fraction {f:?}")))
        })
        .collect()
}

fn cmd_audit(args: &AuditArgs) -> Result<RunConfig> {
    let run = RunConfig::new("audit-shuffle", &args.common, Vec::new())?
        .input("model", Some(&args.model))
        .input("data", Some(&args.data));
    run.no_settings()?;
    let model = load_checkpoint(&args.model)?;
    let data = load_dataset(&args.data)?;
    let fractions = parse_fractions(&args.fractions)?;
    create_dir(&run.out)?;
    let tag = args.tag.clone().unwrap_or_else(|| model.variant.name().to_string());
    let curve = shuffle_audit(&model, &data, &fractions, args.seeds, args.seed, &tag)?;
    fs::write(run.out.join("audit.csv"), curve.to_csv())?;
    fs::write(run.out.join("audit.svg"), audit_svg(std::slice::from_ref(&curve)))?;
    write_json(&run.out.join("audit.json"), &curve)?;
    Ok(run)
}

fn cmd_localize(args: &LocalizeArgs) -> Result<RunConfig> {
    let run = RunConfig::new("localize", &args.common, Vec::new())?
        .input("model", Some(&args.model))
        .input("val", Some(&args.val))
        .input("test", Some(&args.test));
    run.no_settings()?;
    let model = load_checkpoint(&args.model)?;
    let val = load_dataset(&args.val)?;
    let test = load_dataset(&args.test)?;
    let (report, scored) = localize_scored(&model, &val.bags, &test.bags, args.target)?;
    create_dir(&run.out)?;
    fs::write(run.out.join("scores.csv"), scores_csv(&scored))?;
    write_json(&run.out.join("localization.json"), &report)?;
    Ok(run)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn cmd_ablate(args: &AblateArgs) -> Result<RunConfig> {
    let run = RunConfig::new("ablate", &args.common, Vec::new())?
        .input("train", Some(&args.train))
        .input("val", args.val.as_deref())
        .input("test", Some(&args.test));
    let base = run.train_config()?;
    let variants: Vec<Variant> = match &args.variants {
        Some(list) => list.split(',').map(|v| v.trim().parse()).collect::<Result<_>>()?,
        None => Variant::ALL.to_vec(),
    };
    if args.seeds == 0 || variants.is_empty() {
        return Err(Error::Config("ablate needs at least one variant and one seed".into()));
    }
    let train = load_dataset(&args.train)?;
    let val = load_opt(args.val.as_ref())?;
    let test = load_dataset(&args.test)?;
    create_dir(&run.out)?;
    let cells: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|&v| (0..args.seeds as u64).map(move |s| (v, s)))
        .collect();
    let summaries = cells
        .par_iter()
        .map(|&(variant, s)| {
            let cfg = TrainConfig {
                variant,
                seed: base.seed + s,
                ..base.clone()
            };
            let dir = run.out.join("cells").join(format!("{}_seed{}", variant.name(), cfg.seed));
            train_into(&dir, &train, val.as_ref(), Some(&test), &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("kind,variant,seed,metric,mean,std\n");
    for s in &summaries {
        let value = s.test_metric.unwrap_or(f64::NAN);
        csv.push_str(&format!("run,{},{},{},{},\n", s.variant, s.seed, s.metric, value));
    }
    for v in &variants {
        let rows: Vec<&RunSummary> = summaries.iter().filter(|s| s.variant == v.name()).collect();
        let values: Vec<f64> = rows.iter().map(|s| s.test_metric.unwrap_or(f64::NAN)).collect();
        let (mean, std) = mean_std(&values);
        csv.push_str(&format!("aggregate,{},,{},{mean},{std}\n", v.name(), rows[0].metric));
    }
    fs::write(run.out.join("ablation.csv"), csv)?;
    Ok(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Found<T> {
    pub path: String,
    pub value: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditDigest {
    pub tag: String,
    pub fractions: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub endpoint_drop: f64,
    pub nonincreasing_within_std: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub runs: Vec<Found<RunSummary>>,
    pub evaluations: Vec<Found<EvalSummary>>,
    pub audits: Vec<Found<AuditDigest>>,
    pub localization: Vec<Found<LocalizationReport>>,
    pub ablations: Vec<Found<String>>,
}

impl ReportSummary {
    fn is_empty(&self) -> bool {
        self.runs.is_empty()
            && self.evaluations.is_empty()
            && self.audits.is_empty()
            && self.localization.is_empty()
            && self.ablations.is_empty()
    }
}

fn found<T>(path: &str, value: T) -> Found<T> {
    Found {
        path: path.to_string(),
        value,
    }
}

fn cmd_report(args: &ReportArgs) -> Result<RunConfig> {
    let mut run = RunConfig {
        command: "report".into(),
        inputs: Vec::new(),
        settings: Vec::new(),
        out: args.out.clone(),
    };
    let mut summary = ReportSummary {
        runs: Vec::new(),
        evaluations: Vec::new(),
        audits: Vec::new(),
        localization: Vec::new(),
        ablations: Vec::new(),
    };
    let mut logs: Vec<(String, TrainLog)> = Vec::new();
    let mut curves: Vec<AuditCurve> = Vec::new();
    for root in &args.runs {
        if !root.is_dir() {
            return Err(Error::MissingInput(root.clone()));
        }
        for rel in walk(root)? {
            let path = root.join(&rel);
            let dir = rel.parent().map_or(String::new(), |p| p.to_string_lossy().replace('\\', "/"));
            let label = if dir.is_empty() {
                root.display().to_string()
            } else {
                format!("{}/{dir}", root.display())
            };
            let name = rel.file_name().and_then(|n| n.to_str()).unwrap_or("");
            match name {
                "summary.json" => summary.runs.push(found(&label, read_json(&path)?)),
                "eval.json" => summary.evaluations.push(found(&label, read_json(&path)?)),
                "localization.json" => summary.localization.push(found(&label, read_json(&path)?)),
                "ablation.csv" => summary.ablations.push(found(&label, fs::read_to_string(&path)?)),
                "steps.csv" => {
                    let steps = TrainLog::parse_steps_csv(&fs::read_to_string(&path)?)?;
                    logs.push((label.clone(), TrainLog { steps, epochs: Vec::new() }));
                }
                "audit.json" => {
                    let c: AuditCurve = read_json(&path)?;
                    summary.audits.push(found(&label, AuditDigest {
                        tag: c.tag.clone(),
                        fractions: c.fractions.clone(),
                        mean: c.mean.clone(),
                        std: c.std.clone(),
                        endpoint_drop: c.endpoint_drop(),
                        nonincreasing_within_std: c.is_nonincreasing_within_std(),
                    }));
                    curves.push(c);
                }
                _ => continue,
            }
            run.inputs.push((name.to_string(), path));
        }
    }
    if summary.is_empty() && logs.is_empty() {
        let roots: Vec<String> = args.runs.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::Config(format!("no run artifacts found under {}", roots.join(", "))));
    }
    create_dir(&run.out)?;
    write_json(&run.out.join("report.json"), &summary)?;
    if !logs.is_empty() {
        let refs: Vec<(&str, &TrainLog)> = logs.iter().map(|(l, t)| (l.as_str(), t)).collect();
        fs::write(run.out.join("gradients.svg"), gradient_trace_svg(&refs))?;
    }
    if !curves.is_empty() {
        fs::write(run.out.join("audit.svg"), audit_svg(&curves))?;
    }
    Ok(run)
}

/// Runs one command and writes its manifest.
pub fn run(cli: &Cli) -> Result<RunManifest> {
    let config = match &cli.command {
        Command::Gen(a) => cmd_gen(a)?,
        Command::Train(a) => cmd_train(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::AuditShuffle(a) => cmd_audit(a)?,
        Command::Localize(a) => cmd_localize(a)?,
        Command::Ablate(a) => cmd_ablate(a)?,
        Command::Report(a) => cmd_report(a)?,
    };
    write_manifest(&config)
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<RunManifest>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    run(&cli)
}
