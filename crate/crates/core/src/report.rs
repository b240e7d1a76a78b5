//! Result bundles, run manifests and the consolidated summary tables.
//!
//! A bundle holds only values derived from inputs, flags and seeds, so
//! identical runs write byte-identical bundles. Wall-clock data lives in the
//! separate [`RunManifest`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::permtest::PermutationReport;
use crate::probes::ProbeConfig;
use crate::protocol::{AggregateOutcome, Task};

pub const BUNDLE_FORMAT: &str = "tierprobe-bundle";
pub const SCHEMA_VERSION: u32 = 1;
pub const DISPLAY_DECIMALS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BundleLabel {
    Embedding,
    LexicalBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub format: String,
    pub schema_version: u32,
    pub label: BundleLabel,
    pub task: Task,
    pub model_name: String,
    pub outcomes: Vec<AggregateOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<PermutationReport>,
    /// Companion files (kind → file name), e.g. the seed-0 confusion matrix.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub exports: BTreeMap<String, String>,
    /// Hyperparameter choices that are toolkit defaults rather than
    /// measured or tuned values.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<String>,
}

impl ResultBundle {
    pub fn new(label: BundleLabel, task: Task, model_name: impl Into<String>) -> Self {
        ResultBundle {
            format: BUNDLE_FORMAT.into(),
            schema_version: SCHEMA_VERSION,
            label,
            task,
            model_name: model_name.into(),
            outcomes: Vec::new(),
            permutation: None,
            exports: BTreeMap::new(),
            decisions: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

pub fn parse_bundle(s: &str) -> Result<ResultBundle> {
    let value: serde_json::Value = serde_json::from_str(s).map_err(|e| Error::Format(format!("bundle is not JSON: {e}")))?;
    match value.get("format").and_then(|v| v.as_str()) {
        Some(BUNDLE_FORMAT) => {}
        other => return Err(Error::Format(format!("not a result bundle (format {other:?})"))),
    }
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        other => {
            return Err(Error::Format(format!(
                "incompatible bundle schema version {other:?}, this build reads {SCHEMA_VERSION}"
            )))
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Format(format!("malformed bundle: {e}")))
}

/// Notes recorded in every bundle for hyperparameters that are defaults by
/// decision.
pub fn decision_notes(task: Task, probes: &[&str], cfg: &ProbeConfig) -> Vec<String> {
    let mut notes = Vec::new();
    if task == Task::EnergyRegression && probes.contains(&"ridge") {
        notes.push(format!("ridge alpha {} is a fixed default, not tuned", cfg.ridge.alpha));
    }
    if task == Task::EnergyRegression && probes.contains(&"mlp") {
        let m = &cfg.mlp;
        notes.push(format!(
            "mlp architecture {:?} ({:?}), Adam lr {}, {} full-batch epochs are toolkit defaults",
            m.hidden, m.activation, m.learning_rate, m.epochs
        ));
    }
    if task == Task::TierClassification {
        let l = &cfg.logistic;
        notes.push(format!("logistic L2 strength {} and tolerance {} are toolkit defaults", l.reg, l.tol));
    }
    notes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: RunConfig,
    /// Input path → sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output path → sha256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    pub version: String,
    pub prng: String,
    pub started: String,
    pub finished: String,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub cells: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

pub fn format_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.prec$}", prec = DISPLAY_DECIMALS),
        None => "-".into(),
    }
}

impl Table {
    fn new(title: &str, columns: &[&str]) -> Self {
        Table { title: title.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    fn row_mut(&mut self, label: &str) -> &mut TableRow {
        if let Some(i) = self.rows.iter().position(|r| r.label == label) {
            return &mut self.rows[i];
        }
        let width = self.columns.len();
        self.rows.push(TableRow { label: label.into(), cells: vec![None; width] });
        self.rows.last_mut().unwrap()
    }

    fn set(&mut self, label: &str, col: usize, v: f64) -> Result<()> {
        let cell = &mut self.row_mut(label).cells[col];
        if cell.is_some() {
            return Err(Error::Format(format!("two bundles report `{label}` for column `{}`", self.columns[col])));
        }
        *cell = Some(v);
        Ok(())
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut widths = vec![self.rows.iter().map(|r| r.label.chars().count()).max().unwrap_or(0).max(5)];
        for (i, c) in self.columns.iter().enumerate() {
            let w = self.rows.iter().map(|r| format_cell(r.cells[i]).len()).max().unwrap_or(0);
            widths.push(w.max(c.chars().count()));
        }
        writeln!(f, "{}", self.title)?;
        write!(f, "{:<w$}", "Model", w = widths[0])?;
        for (c, w) in self.columns.iter().zip(&widths[1..]) {
            write!(f, "  {c:>w$}")?;
        }
        writeln!(f)?;
        let total = widths.iter().sum::<usize>() + 2 * self.columns.len();
        writeln!(f, "{}", "-".repeat(total))?;
        for r in &self.rows {
            write!(f, "{:<w$}", r.label, w = widths[0])?;
            for (v, w) in r.cells.iter().zip(&widths[1..]) {
                write!(f, "  {:>w$}", format_cell(*v))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Model × metric tables assembled from any mix of bundles.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportTables {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<Table>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Table>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significance: Option<Table>,
}

fn row_label(b: &ResultBundle) -> String {
    match b.label {
        BundleLabel::Embedding => b.model_name.clone(),
        BundleLabel::LexicalBaseline => format!("{} [lexical-baseline]", b.model_name),
    }
}

pub fn report_tables(bundles: &[ResultBundle]) -> Result<ReportTables> {
    if bundles.is_empty() {
        return Err(Error::Config("no bundles to report".into()));
    }
    let mut reg = Table::new("Energy regression (mean over splits)", &["Ridge R2", "Ridge MSE", "MLP R2", "MLP MSE"]);
    let mut cls = Table::new("Tier classification (mean over splits)", &["Accuracy", "Weighted F1"]);
    let mut sig = Table::new("Permutation significance", &["Observed", "p-value"]);
    for b in bundles {
        let label = row_label(b);
        for o in &b.outcomes {
            let need = |m: &str| {
                o.mean_of(m).ok_or_else(|| Error::Format(format!("outcome for `{label}` lacks metric `{m}`")))
            };
            match (o.task, o.probe.as_str()) {
                (Task::EnergyRegression, "ridge") => {
                    reg.set(&label, 0, need("r2")?)?;
                    reg.set(&label, 1, need("mse")?)?;
                }
                (Task::EnergyRegression, "mlp") => {
                    reg.set(&label, 2, need("r2")?)?;
                    reg.set(&label, 3, need("mse")?)?;
                }
                (Task::TierClassification, _) => {
                    cls.set(&label, 0, need("accuracy")?)?;
                    cls.set(&label, 1, need("weighted_f1")?)?;
                }
                (_, probe) => return Err(Error::Format(format!("unknown probe `{probe}` in bundle for `{label}`"))),
            }
        }
        if let Some(p) = &b.permutation {
            let row = format!("{label} ({})", p.statistic);
            sig.set(&row, 0, p.observed)?;
            sig.set(&row, 1, p.p_value)?;
        }
    }
    let keep = |t: Table| (!t.rows.is_empty()).then_some(t);
    Ok(ReportTables { regression: keep(reg), classification: keep(cls), significance: keep(sig) })
}

impl fmt::Display for ReportTables {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for t in [&self.regression, &self.classification, &self.significance].into_iter().flatten() {
            if !first {
                writeln!(f)?;
            }
            first = false;
            write!(f, "{t}")?;
        }
        Ok(())
    }
}
