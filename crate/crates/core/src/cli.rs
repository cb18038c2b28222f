//! Command-line front end. Each subcommand validates its flags, then calls
//! one or two library operations and writes the primary artifact to
//! `--out` (or standard output).
//!
//! Exit codes: 0 success, 1 validation / parse / integrity errors, 2 I/O
//! errors. With `--json-errors` the error goes to standard error as a single
//! JSON object `{"error": kind, "message": text, "exit_code": n}`.
//!
//! `--config FILE` reads TOML. Top-level keys fill any flag of the same
//! name (with `_` or `-`) that the chosen subcommand defines; a table named
//! after the subcommand may only contain that subcommand's flags. Flags on
//! the command line always win.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::json;

use crate::assignment::{self, LossConfig, LossInput, LossWeights};
use crate::datamodel::{self, Category, CategoryId, DetectionDataset};
use crate::error::{Error, Result};
use crate::evaluation::{self, EvalConfig, PromptFilter};
use crate::reporting::{self, ExperimentGrid, Metric, OutputFormat};
use crate::splits::{self, SplitKind, SplitSpec};

#[derive(Debug, Parser)]
#[command(
    name = "fruitbench",
    version,
    about = "Fruit detection benchmark engine"
)]
pub struct Cli {
    /// TOML file supplying default flag values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Report errors on standard error as JSON.
    #[arg(long, global = true)]
    pub json_errors: bool,

    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, env = "FRUITBENCH_THREADS")]
    pub threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a directory of Labelme JSON files to a COCO file.
    IngestLabelme(IngestArgs),
    /// Load, validate and canonicalize a COCO file.
    WriteCoco(WriteCocoArgs),
    /// Per-category dataset statistics.
    Stats(StatsArgs),
    /// Materialize a seeded split and write its manifest.
    Split(SplitArgs),
    /// Score detections against a split.
    Evaluate(EvaluateArgs),
    /// Set-prediction loss over a batch file.
    Loss(LossArgs),
    /// Referring-expression scoring with attribute-filtered ground truth.
    RecEval(RecEvalArgs),
    /// Evaluate an experiment grid and render the metric table.
    Report(ReportArgs),
    /// Summarize inference latency logs.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Write the result here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of Labelme `.json` files.
    #[arg(long)]
    pub dir: PathBuf,
    /// Label-to-category map, e.g. `apple=1,orange=2`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub categories: Vec<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct WriteCocoArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value = "markdown")]
    pub format: OutputFormat,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value = "train-test")]
    pub kind: SplitKind,
    /// Train share of each stratum (the pool for k-shot).
    #[arg(long, default_value_t = 0.6)]
    pub fraction: f64,
    /// Images per category for k-shot.
    #[arg(long)]
    pub k: Option<u32>,
    /// Held-out category (name or id) for cross-class.
    #[arg(long)]
    pub held_out: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// IoU thresholds; defaults to 0.50:0.05:0.95.
    #[arg(long, value_delimiter = ',')]
    pub iou_thresholds: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub max_dets: usize,
}

impl EvalArgs {
    fn config(&self) -> Result<EvalConfig> {
        let mut c = EvalConfig {
            max_dets: self.max_dets,
            ..EvalConfig::default()
        };
        if !self.iou_thresholds.is_empty() {
            c.iou_thresholds = self.iou_thresholds.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Split manifest written by `split`.
    #[arg(long)]
    pub split: PathBuf,
    #[command(flatten)]
    pub eval: EvalArgs,
    /// `json` writes the full report; `markdown` / `csv` a one-row grid.
    #[arg(long, default_value = "json")]
    pub format: OutputFormat,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// JSON batch `{"images": [{image_id, width, height, predictions, targets}]}`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub w_l1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_giou: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_cons: f64,
    /// Do not charge unmatched predictions the alignment loss.
    #[arg(long)]
    pub no_penalize_unmatched: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RecEvalArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Detections carrying a `prompt` field.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// JSON object mapping each prompt to `{categories, predicate}`.
    #[arg(long)]
    pub prompts: PathBuf,
    #[command(flatten)]
    pub eval: EvalArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment grid (TOML).
    #[arg(long)]
    pub grid: PathBuf,
    /// Overrides the grid file's format.
    #[arg(long)]
    pub format: Option<OutputFormat>,
    /// Subset of metrics, e.g. `mAP,AP50`.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON-lines latency log `{model, image_id, latency_ms}`.
    #[arg(long)]
    pub timing: PathBuf,
    #[arg(long, default_value = "markdown")]
    pub format: OutputFormat,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Runs the CLI with the process's standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI writing the primary output to `out` and diagnostics to
/// `err`. Returns the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let json_errors = argv.iter().skip(1).any(|a| a == "--json-errors");
    let cli = match parse(&argv) {
        Ok(cli) => cli,
        Err(Failure::Clap(e)) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = write!(err, "{}", e.render());
                return 1;
            }
            report(err, json_errors, "usage", &e.render().to_string(), 1);
            return 1;
        }
        Err(Failure::Lib(e)) => {
            report(err, json_errors, e.kind(), &e.to_string(), e.exit_code());
            return e.exit_code();
        }
    };

    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();

    let result = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => {
            let (mut out_buf, mut err_buf) = (Vec::new(), Vec::new());
            let r = pool.install(|| execute(&cli.command, &mut out_buf, &mut err_buf));
            let _ = err.write_all(&err_buf);
            match out.write_all(&out_buf).and_then(|_| out.flush()) {
                Ok(()) => r,
                Err(e) => r.and(Err(Error::io("<stdout>", e))),
            }
        }
        Err(e) => Err(Error::validation(format!("cannot start worker pool: {e}"))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            report(err, json_errors, e.kind(), &e.to_string(), e.exit_code());
            e.exit_code()
        }
    }
}

fn report(err: &mut dyn Write, json_errors: bool, kind: &str, message: &str, code: i32) {
    let message = message.trim_end();
    if json_errors {
        let _ = writeln!(
            err,
            "{}",
            json!({ "error": kind, "message": message, "exit_code": code })
        );
    } else {
        let _ = writeln!(err, "fruitbench: {message}");
    }
}

enum Failure {
    Clap(clap::Error),
    Lib(Error),
}

fn parse(argv: &[OsString]) -> std::result::Result<Cli, Failure> {
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        // Required flags may come from the config file; read it leniently first.
        Err(e)
            if argv
                .iter()
                .any(|a| a == "--config" || a.to_string_lossy().starts_with("--config=")) =>
        {
            let lenient = Cli::command()
                .ignore_errors(true)
                .try_get_matches_from(argv);
            match lenient {
                Ok(m) if m.subcommand().is_some() && m.get_one::<PathBuf>("config").is_some() => m,
                _ => return Err(Failure::Clap(e)),
            }
        }
        Err(e) => return Err(Failure::Clap(e)),
    };
    let Some(config) = matches.get_one::<PathBuf>("config").cloned() else {
        return Cli::from_arg_matches(&matches).map_err(Failure::Clap);
    };
    let (sub_name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let extra = config_args(&config, sub_name, sub_matches).map_err(Failure::Lib)?;
    let mut full = argv.to_vec();
    full.extend(extra);
    let matches = Cli::command()
        .try_get_matches_from(&full)
        .map_err(Failure::Clap)?;
    Cli::from_arg_matches(&matches).map_err(Failure::Clap)
}

/// Flags supplied by the config file for arguments the command line left
/// unset.
fn config_args(
    path: &Path,
    sub_name: &str,
    sub_matches: &clap::ArgMatches,
) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| reporting::toml_error(path, &text, e))?;

    let cmd = Cli::command();
    let sub = cmd.find_subcommand(sub_name).expect("known subcommand");
    let flags: HashMap<String, &clap::Arg> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(|l| (l.to_string(), a)))
        .collect();
    let global = ["config", "json-errors", "threads", "verbose"];

    let mut values: BTreeMap<String, toml::Value> = BTreeMap::new();
    for (key, value) in &table {
        let flag = key.replace('_', "-");
        if let toml::Value::Table(section) = value {
            if cmd.find_subcommand(key).is_none() {
                return Err(Error::validation(format!(
                    "{}: unknown section [{key}]",
                    path.display()
                )));
            }
            if key != sub_name {
                continue;
            }
            for (k, v) in section {
                let f = k.replace('_', "-");
                if !flags.contains_key(&f) || global.contains(&f.as_str()) {
                    return Err(Error::validation(format!(
                        "{}: [{key}] has unknown key {k:?}",
                        path.display()
                    )));
                }
                values.insert(f, v.clone());
            }
        } else if flags.contains_key(&flag) && !global.contains(&flag.as_str()) {
            values.entry(flag).or_insert_with(|| value.clone());
        } else if !global.contains(&flag.as_str()) && !is_any_flag(&cmd, &flag) {
            return Err(Error::validation(format!(
                "{}: unknown key {key:?}",
                path.display()
            )));
        }
    }

    let mut extra = Vec::new();
    for (flag, value) in values {
        let arg = flags[&flag];
        if sub_matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
            continue;
        }
        let takes_value = arg.get_action().takes_values();
        match value {
            toml::Value::Boolean(b) if !takes_value => {
                if b {
                    extra.push(OsString::from(format!("--{flag}")));
                }
            }
            toml::Value::Array(items) => {
                for item in items {
                    extra.push(OsString::from(format!(
                        "--{flag}={}",
                        scalar(&item, path, &flag)?
                    )));
                }
            }
            other => extra.push(OsString::from(format!(
                "--{flag}={}",
                scalar(&other, path, &flag)?
            ))),
        }
    }
    Ok(extra)
}

fn is_any_flag(cmd: &clap::Command, flag: &str) -> bool {
    cmd.get_subcommands()
        .any(|s| s.get_arguments().any(|a| a.get_long() == Some(flag)))
}

fn scalar(v: &toml::Value, path: &Path, flag: &str) -> Result<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        _ => Err(Error::validation(format!(
            "{}: key {flag:?} must be a scalar or a list of scalars",
            path.display()
        ))),
    }
}

fn emit(target: &OutArgs, out: &mut dyn Write, text: &str) -> Result<()> {
    match &target.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn parse_category_map(entries: &[String]) -> Result<HashMap<String, Category>> {
    let mut map = HashMap::new();
    for entry in entries {
        let (name, id) = entry
            .split_once('=')
            .ok_or_else(|| Error::validation(format!("category entry {entry:?} is not name=id")))?;
        let id: CategoryId = id.trim().parse().map_err(|_| {
            Error::validation(format!("category entry {entry:?}: id is not an integer"))
        })?;
        if id == 0 {
            return Err(Error::validation("category ids must be positive"));
        }
        let name = name.trim();
        if map
            .insert(name.to_string(), Category::new(id, name))
            .is_some()
        {
            return Err(Error::validation(format!("category {name:?} listed twice")));
        }
    }
    Ok(map)
}

fn load_dataset(path: &Path) -> Result<DetectionDataset> {
    let load = datamodel::load_coco(path)?;
    if load.clamped > 0 {
        log::warn!(
            "{}: {} box(es) clamped to their image",
            path.display(),
            load.clamped
        );
    }
    Ok(load.dataset)
}

fn resolve_category(ds: &DetectionDataset, key: &str) -> Result<CategoryId> {
    if let Some(c) = ds.category_by_name(key) {
        return Ok(c.id);
    }
    key.trim()
        .parse::<CategoryId>()
        .ok()
        .filter(|id| ds.category(*id).is_some())
        .ok_or_else(|| Error::integrity(format!("unknown category {key:?}")))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, &text, e))
}

fn execute(command: &Command, out: &mut Vec<u8>, err: &mut Vec<u8>) -> Result<()> {
    match command {
        Command::IngestLabelme(a) => {
            let map = parse_category_map(&a.categories)?;
            let import = datamodel::load_labelme(&a.dir, &map)?;
            for (label, n) in &import.unmapped {
                let _ = writeln!(err, "unmapped label {label:?}: {n} shape(s) skipped");
            }
            if import.clamped > 0 {
                let _ = writeln!(err, "{} box(es) clamped to their image", import.clamped);
            }
            emit(&a.out, out, &datamodel::coco_json(&import.dataset))
        }
        Command::WriteCoco(a) => {
            let ds = load_dataset(&a.annotations)?;
            emit(&a.out, out, &datamodel::coco_json(&ds))
        }
        Command::Stats(a) => {
            let ds = load_dataset(&a.annotations)?;
            let stats = datamodel::compute_stats(&ds);
            emit(
                &a.out,
                out,
                &reporting::render_stats_table(&stats, a.format),
            )
        }
        Command::Split(a) => {
            // Everything except the held-out category can be checked
            // before touching the file.
            let draft = SplitSpec {
                kind: a.kind,
                fraction: Some(a.fraction),
                k: a.k,
                held_out: a.held_out.as_ref().map(|_| 1),
                seed: a.seed,
            };
            draft.validate()?;
            let ds = load_dataset(&a.annotations)?;
            let held_out = a
                .held_out
                .as_deref()
                .map(|h| resolve_category(&ds, h))
                .transpose()?;
            let spec = SplitSpec { held_out, ..draft };
            let result = splits::materialize(&ds, &spec)?;
            let _ = writeln!(
                err,
                "{} train / {} test images, digest {}",
                result.train_image_ids.len(),
                result.test_image_ids.len(),
                result.manifest_digest
            );
            emit(&a.out, out, &splits::manifest_json(&result))
        }
        Command::Evaluate(a) => {
            let config = a.eval.config()?;
            let ds = load_dataset(&a.annotations)?;
            let split = splits::load_manifest(&a.split)?;
            let dets = datamodel::load_predictions(&a.predictions, &ds)?;
            let rep = evaluation::evaluate(&ds, &split, &dets, &config)?;
            let text = match a.format {
                OutputFormat::Json => rep.to_json(),
                f => {
                    reporting::render_metric_grid(&["result".into()], &[rep], &Metric::ALL, &[], f)?
                        .text
                }
            };
            emit(&a.out, out, &text)
        }
        Command::Loss(a) => {
            let weights = LossWeights {
                l1: a.w_l1,
                giou: a.w_giou,
                contrastive: a.w_cons,
            };
            let config = LossConfig {
                weights,
                penalize_unmatched: !a.no_penalize_unmatched,
            };
            // Validates the weights without any input.
            assignment::set_loss(&[], &[], 1.0, 1.0, &config)?;
            let input: LossInput = read_json(&a.input)?;
            let rep = assignment::loss_report(&input, &config)?;
            let mut text = serde_json::to_string_pretty(&rep).expect("loss report serializes");
            text.push('\n');
            emit(&a.out, out, &text)
        }
        Command::RecEval(a) => {
            let config = a.eval.config()?;
            let ds = load_dataset(&a.annotations)?;
            let split = splits::load_manifest(&a.split)?;
            let filters: BTreeMap<String, PromptFilter> = read_json(&a.prompts)?;
            let dets = datamodel::load_predictions(&a.predictions, &ds)?;
            let reports = evaluation::evaluate_rec(&ds, &split, &dets, &filters, &config)?;
            let mut text = serde_json::to_string_pretty(&reports).expect("reports serialize");
            text.push('\n');
            emit(&a.out, out, &text)
        }
        Command::Report(a) => {
            let metrics = a
                .metrics
                .iter()
                .map(|m| {
                    Metric::ALL
                        .into_iter()
                        .find(|x| x.label().eq_ignore_ascii_case(m.trim()))
                        .ok_or_else(|| Error::validation(format!("unknown metric {m:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grid = ExperimentGrid::load(&a.grid)?;
            if let Some(f) = a.format {
                grid.format = f;
            }
            if !metrics.is_empty() {
                grid.metrics = metrics;
            }
            let rendered = reporting::run_grid(&grid)?;
            if rendered.warnings > 0 {
                let _ = writeln!(
                    err,
                    "warning: {} cell(s) rendered as {}",
                    rendered.warnings,
                    reporting::MISSING
                );
            }
            emit(&a.out, out, &rendered.text)
        }
        Command::Bench(a) => {
            let records = reporting::load_timing_log(&a.timing)?;
            emit(
                &a.out,
                out,
                &reporting::summarize_timing(&records, a.format),
            )
        }
    }
}
