//! Text renderings of dataset statistics, metric grids and timing tables.
//!
//! All renderers are pure functions of their inputs. Numbers are formatted
//! with Rust's exact decimal formatting (round half to even on the binary
//! value), so output bytes do not depend on the platform.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::datamodel::{self, CategoryStats, DatasetStats};
use crate::error::{Error, Result};
use crate::evaluation::{self, CategoryMetrics, EvalConfig, EvaluationReport};
use crate::splits::{self, SplitResult, SplitSpec};

/// Placeholder for a value that could not be computed.
pub const MISSING: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::validation(format!(
                "unknown output format {other:?}"
            ))),
        }
    }
}

/// `1234567` -> `"1,234,567"`.
pub fn with_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Nearest integer, ties to even.
pub fn round_count(x: f64) -> u64 {
    x.round_ties_even().max(0.0) as u64
}

fn display_name(name: &str) -> String {
    let mut chars = name.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const STATS_HEADER: [&str; 6] = [
    "",
    "# imgs",
    "# bboxes",
    "# avg. bboxes/image",
    "# avg. size/instance",
    "Region",
];

fn stats_cells(row: &CategoryStats, grouped: bool) -> [String; 6] {
    let num = |n: u64| {
        if grouped {
            with_thousands(n)
        } else {
            n.to_string()
        }
    };
    let avg = |v: Option<f64>| num(v.map(round_count).unwrap_or(0));
    [
        display_name(&row.name),
        num(row.image_count as u64),
        num(row.bbox_count as u64),
        avg(row.avg_bboxes_per_image),
        avg(row.avg_size_per_instance),
        row.regions.join(" & "),
    ]
}

/// Table of per-category counts plus the total row. Averages are rounded to
/// integers; markdown groups thousands, CSV does not.
pub fn render_stats_table(stats: &DatasetStats, format: OutputFormat) -> String {
    let rows: Vec<&CategoryStats> = stats.categories.iter().chain([&stats.total]).collect();
    match format {
        OutputFormat::Markdown => {
            let mut out = markdown_row(STATS_HEADER.iter().map(|s| s.to_string()));
            out.push_str(&markdown_rule(STATS_HEADER.len()));
            for r in rows {
                out.push_str(&markdown_row(stats_cells(r, true)));
            }
            out
        }
        OutputFormat::Csv => {
            let mut out = String::from(
                "category,imgs,bboxes,avg_bboxes_per_image,avg_size_per_instance,region\n",
            );
            for r in rows {
                let cells = stats_cells(r, false);
                out.push_str(
                    &cells
                        .iter()
                        .map(|c| csv_field(c))
                        .collect::<Vec<_>>()
                        .join(","),
                );
                out.push('\n');
            }
            out
        }
        OutputFormat::Json => pretty(&serde_json::to_value(stats).expect("stats serialize")),
    }
}

fn markdown_row(cells: impl IntoIterator<Item = String>) -> String {
    let mut line = String::from("|");
    for c in cells {
        let _ = write!(line, " {c} |");
    }
    line.push('\n');
    line
}

fn markdown_rule(n: usize) -> String {
    let mut line = String::from("|");
    for _ in 0..n {
        line.push_str(" --- |");
    }
    line.push('\n');
    line
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "mAP")]
    Map,
    #[serde(rename = "AP50")]
    Ap50,
    #[serde(rename = "mAR")]
    Mar,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Map, Metric::Ap50, Metric::Mar];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Map => "mAP",
            Metric::Ap50 => "AP50",
            Metric::Mar => "mAR",
        }
    }

    pub fn of(self, m: &CategoryMetrics) -> Option<f64> {
        match self {
            Metric::Map => m.map,
            Metric::Ap50 => m.ap50,
            Metric::Mar => m.mar,
        }
    }
}

fn default_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

/// One experiment setting: a split (inline spec or stored manifest) and the
/// predictions produced under it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRow {
    pub label: String,
    pub predictions: PathBuf,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

/// A table of settings (rows) by categories (column groups).
///
/// Loaded from TOML:
///
/// ```toml
/// annotations = "corpus.json"
/// metrics = ["mAP", "AP50", "mAR"]
///
/// [[rows]]
/// label = "Fine-tuning"
/// predictions = "finetune.json"
/// split = { kind = "train-test", fraction = 0.6, seed = 0 }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGrid {
    pub annotations: PathBuf,
    pub rows: Vec<GridRow>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// Category names for the column groups; empty means every category.
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub max_dets: Option<usize>,
}

impl ExperimentGrid {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut grid: Self = toml::from_str(&text).map_err(|e| toml_error(path, &text, e))?;
        // Relative paths in the file are relative to the file.
        if let Some(base) = path.parent() {
            grid.rebase(base);
        }
        grid.validate()?;
        Ok(grid)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.annotations);
        for r in &mut self.rows {
            fix(&mut r.predictions);
            if let Some(m) = &mut r.manifest {
                fix(m);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::validation("experiment grid has no rows"));
        }
        if self.metrics.is_empty() {
            return Err(Error::validation("experiment grid selects no metrics"));
        }
        let mut seen = HashSet::new();
        for r in &self.rows {
            if !seen.insert(r.label.as_str()) {
                return Err(Error::validation(format!(
                    "duplicate row label {:?}",
                    r.label
                )));
            }
            match (&r.split, &r.manifest) {
                (Some(spec), None) => spec.validate()?,
                (None, Some(_)) => {}
                _ => {
                    return Err(Error::validation(format!(
                        "row {:?} needs exactly one of split or manifest",
                        r.label
                    )))
                }
            }
        }
        Ok(())
    }

    /// Loads every referenced file and evaluates each row.
    pub fn evaluate(&self) -> Result<Vec<EvaluationReport>> {
        self.validate()?;
        let ds = datamodel::load_coco(&self.annotations)?.dataset;
        let mut config = EvalConfig::default();
        if let Some(m) = self.max_dets {
            config.max_dets = m;
        }
        self.rows
            .iter()
            .map(|row| {
                let split: SplitResult = match (&row.split, &row.manifest) {
                    (Some(spec), _) => splits::materialize(&ds, spec)?,
                    (_, Some(path)) => splits::load_manifest(path)?,
                    _ => unreachable!("validated"),
                };
                let dets = datamodel::load_predictions(&row.predictions, &ds)?;
                evaluation::evaluate(&ds, &split, &dets, &config)
            })
            .collect()
    }
}

pub(crate) fn toml_error(path: &Path, text: &str, e: toml::de::Error) -> Error {
    let offset = e.span().map(|s| s.start).unwrap_or(0);
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    Error::Parse {
        path: path.to_path_buf(),
        offset,
        line,
        column,
        message: e.message().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedGrid {
    pub text: String,
    /// Number of cells rendered as [`MISSING`].
    pub warnings: usize,
}

/// One decimal of a percentage: `0.594` -> `"59.4"`.
pub fn percent(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

/// Renders `reports[i]` as the row labelled `labels[i]`. Values are ×100
/// with one decimal. A category missing from a report, or a metric that is
/// absent, renders as [`MISSING`] and counts one warning.
pub fn render_metric_grid(
    labels: &[String],
    reports: &[EvaluationReport],
    metrics: &[Metric],
    categories: &[String],
    format: OutputFormat,
) -> Result<RenderedGrid> {
    if labels.len() != reports.len() {
        return Err(Error::validation(format!(
            "{} row labels for {} reports",
            labels.len(),
            reports.len()
        )));
    }
    let categories: Vec<String> = if categories.is_empty() {
        let mut names: Vec<String> = Vec::new();
        for r in reports {
            for c in &r.per_category {
                if !names.contains(&c.name) {
                    names.push(c.name.clone());
                }
            }
        }
        names
    } else {
        categories.to_vec()
    };

    let mut warnings = 0;
    // cells[row][category][metric]
    let cells: Vec<Vec<Vec<Option<String>>>> = reports
        .iter()
        .map(|r| {
            categories
                .iter()
                .map(|name| {
                    let m = r.category(name);
                    metrics
                        .iter()
                        .map(|metric| {
                            let v = m.and_then(|m| metric.of(m)).map(percent);
                            if v.is_none() {
                                warnings += 1;
                            }
                            v
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    if warnings > 0 {
        log::warn!("{warnings} grid cell(s) have no value");
    }

    let text = match format {
        OutputFormat::Markdown => {
            let mut header = vec![String::new()];
            for c in &categories {
                for m in metrics {
                    header.push(format!("{} {}", display_name(c), m.label()));
                }
            }
            let mut out = markdown_row(header.clone());
            out.push_str(&markdown_rule(header.len()));
            for (label, row) in labels.iter().zip(&cells) {
                let values = row
                    .iter()
                    .flatten()
                    .map(|v| v.clone().unwrap_or_else(|| MISSING.into()));
                out.push_str(&markdown_row(std::iter::once(label.clone()).chain(values)));
            }
            out
        }
        OutputFormat::Csv => {
            let mut header = vec!["setting".to_string()];
            for c in &categories {
                for m in metrics {
                    header.push(format!("{c} {}", m.label()));
                }
            }
            let mut out = header
                .iter()
                .map(|h| csv_field(h))
                .collect::<Vec<_>>()
                .join(",");
            out.push('\n');
            for (label, row) in labels.iter().zip(&cells) {
                let mut fields = vec![csv_field(label)];
                fields.extend(row.iter().flatten().map(|v| v.clone().unwrap_or_default()));
                out.push_str(&fields.join(","));
                out.push('\n');
            }
            out
        }
        OutputFormat::Json => {
            let rows: Vec<Value> = labels
                .iter()
                .zip(&cells)
                .map(|(label, row)| {
                    let groups: serde_json::Map<String, Value> = categories
                        .iter()
                        .zip(row)
                        .map(|(c, vals)| {
                            let obj: serde_json::Map<String, Value> = metrics
                                .iter()
                                .zip(vals)
                                .map(|(m, v)| {
                                    let num = v
                                        .as_ref()
                                        .map(|s| s.parse::<f64>().expect("formatted number"));
                                    (m.label().to_string(), json!(num))
                                })
                                .collect();
                            (c.clone(), Value::Object(obj))
                        })
                        .collect();
                    json!({ "setting": label, "categories": groups })
                })
                .collect();
            pretty(&json!({
                "metrics": metrics.iter().map(|m| m.label()).collect::<Vec<_>>(),
                "rows": rows,
            }))
        }
    };
    Ok(RenderedGrid { text, warnings })
}

/// Evaluates and renders a grid in its configured format.
pub fn run_grid(grid: &ExperimentGrid) -> Result<RenderedGrid> {
    let reports = grid.evaluate()?;
    let labels: Vec<String> = grid.rows.iter().map(|r| r.label.clone()).collect();
    render_metric_grid(
        &labels,
        &reports,
        &grid.metrics,
        &grid.categories,
        grid.format,
    )
}

/// Per-image latencies of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub model: String,
    pub latencies_ms: Vec<f64>,
}

impl TimingRecord {
    pub fn new(model: impl Into<String>, latencies_ms: Vec<f64>) -> Result<Self> {
        let model = model.into();
        if latencies_ms.is_empty() {
            return Err(Error::validation(format!(
                "model {model:?} has no latencies"
            )));
        }
        if let Some(v) = latencies_ms.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::validation(format!(
                "model {model:?}: latency {v} ms is not a positive number"
            )));
        }
        Ok(Self {
            model,
            latencies_ms,
        })
    }

    pub fn mean_ms(&self) -> f64 {
        self.latencies_ms.iter().sum::<f64>() / self.latencies_ms.len() as f64
    }

    /// Images per second at the mean latency.
    pub fn fps(&self) -> f64 {
        1000.0 / self.mean_ms()
    }

    /// `"21.9 FPS, 45.7 ms"`.
    pub fn summary(&self) -> String {
        format!("{:.1} FPS, {:.1} ms", self.fps(), self.mean_ms())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TimingLine {
    model: String,
    #[allow(dead_code)]
    image_id: Value,
    latency_ms: f64,
}

/// Parses a JSON-lines latency log. Records are grouped by model in order
/// of first appearance; blank lines are skipped.
pub fn parse_timing_log(path: &Path, text: &str) -> Result<Vec<TimingRecord>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_model: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let start = offset;
        offset += line.len();
        if line.trim().is_empty() {
            continue;
        }
        let rec: TimingLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            offset: start + e.column().saturating_sub(1),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        if !by_model.contains_key(&rec.model) {
            order.push(rec.model.clone());
        }
        by_model.entry(rec.model).or_default().push(rec.latency_ms);
    }
    order
        .into_iter()
        .map(|m| {
            let lat = by_model.remove(&m).unwrap_or_default();
            TimingRecord::new(m, lat)
        })
        .collect()
}

pub fn load_timing_log(path: impl AsRef<Path>) -> Result<Vec<TimingRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_timing_log(path, &text)
}

/// Model / FPS / latency table, one row per record.
pub fn summarize_timing(records: &[TimingRecord], format: OutputFormat) -> String {
    match format {
        OutputFormat::Markdown => {
            let mut out = markdown_row(
                ["Model", "FPS (imgs/s)", "Inference time per image (ms)"].map(String::from),
            );
            out.push_str(&markdown_rule(3));
            for r in records {
                out.push_str(&markdown_row([
                    r.model.clone(),
                    format!("{:.1}", r.fps()),
                    format!("{:.1}", r.mean_ms()),
                ]));
            }
            out
        }
        OutputFormat::Csv => {
            let mut out = String::from("model,fps,latency_ms,images\n");
            for r in records {
                let _ = writeln!(
                    out,
                    "{},{:.1},{:.1},{}",
                    csv_field(&r.model),
                    r.fps(),
                    r.mean_ms(),
                    r.latencies_ms.len()
                );
            }
            out
        }
        OutputFormat::Json => pretty(&Value::Array(
            records
                .iter()
                .map(|r| {
                    json!({
                        "model": r.model,
                        "images": r.latencies_ms.len(),
                        "mean_latency_ms": r.mean_ms(),
                        "fps": r.fps(),
                        "summary": r.summary(),
                    })
                })
                .collect(),
        )),
    }
}
