//! CSV and JSON output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use selsov::inference::{CoordinateInference, InferenceReport, StopReason};
use selsov::study::{CompareTable, ResultTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Per-method inference on one selected model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceTable {
    /// Selected design columns, in model order.
    pub selected: Vec<usize>,
    pub lambda: f64,
    pub sigma2: f64,
    pub reports: Vec<InferenceReport>,
}

/// Selective MLE with optimizer diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleOutput {
    pub selected: Vec<usize>,
    pub lambda: f64,
    pub sigma2: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub stop: Option<StopReason>,
    pub final_nll: Option<f64>,
    pub report: InferenceReport,
}

/// A value that can be written as a flat CSV table. Scalars that do not fit
/// the rows go into leading `# key: value` comment lines.
pub trait Tabular: Serialize {
    fn header(&self) -> Vec<&'static str>;
    fn records(&self) -> Vec<Vec<String>>;
    fn notes(&self) -> Vec<String> {
        Vec::new()
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl Tabular for ResultTable {
    fn header(&self) -> Vec<&'static str> {
        let mut h = vec![
            "method", "n", "p", "covariance", "covariance_param", "c0", "lambda", "repetitions", "empty", "failed",
            "intervals", "coverage", "coverage_lo", "coverage_hi", "mean_length", "length_lo", "length_hi",
            "mean_stderr", "flagged",
        ];
        if self.rows.iter().any(|r| r.seconds.is_some()) {
            h.push("seconds");
        }
        h
    }

    fn records(&self) -> Vec<Vec<String>> {
        let timed = self.rows.iter().any(|r| r.seconds.is_some());
        self.rows
            .iter()
            .map(|r| {
                let mut v = vec![
                    r.method.to_string(),
                    r.n.to_string(),
                    r.p.to_string(),
                    label(&r.covariance),
                    num(r.covariance_param),
                    num(r.c0),
                    label(&r.lambda),
                    r.repetitions.to_string(),
                    r.empty.to_string(),
                    r.failed.to_string(),
                    r.intervals.to_string(),
                    num(r.coverage),
                    num(r.coverage_lo),
                    num(r.coverage_hi),
                    num(r.mean_length),
                    num(r.length_lo),
                    num(r.length_hi),
                    num(r.mean_stderr),
                    r.flagged.to_string(),
                ];
                if timed {
                    v.push(opt(r.seconds));
                }
                v
            })
            .collect()
    }

    fn notes(&self) -> Vec<String> {
        self.failures.iter().map(|f| format!("failure: {f}")).collect()
    }
}

impl Tabular for CompareTable {
    fn header(&self) -> Vec<&'static str> {
        let mut h = vec![
            "index", "sov_points", "hit_and_run_draws", "randomizations", "sov_pvalue", "sov_stderr",
            "hit_and_run_pvalue", "hit_and_run_stderr",
        ];
        if self.rows.iter().any(|r| r.sov_seconds.is_some()) {
            h.extend(["sov_seconds", "hit_and_run_seconds"]);
        }
        h
    }

    fn records(&self) -> Vec<Vec<String>> {
        let timed = self.rows.iter().any(|r| r.sov_seconds.is_some());
        self.rows
            .iter()
            .map(|r| {
                let mut v = vec![
                    r.index.to_string(),
                    r.sov_points.to_string(),
                    r.hit_and_run_draws.to_string(),
                    r.randomizations.to_string(),
                    num(r.sov_pvalue),
                    num(r.sov_stderr),
                    num(r.hit_and_run_pvalue),
                    num(r.hit_and_run_stderr),
                ];
                if timed {
                    v.extend([opt(r.sov_seconds), opt(r.hit_and_run_seconds)]);
                }
                v
            })
            .collect()
    }
}

const COORDINATE_HEADER: [&str; 9] =
    ["method", "index", "estimate", "pvalue", "ci_lower", "ci_upper", "stderr", "min_ess", "flagged"];

fn coordinate_record(method: &str, e: &CoordinateInference) -> Vec<String> {
    vec![
        method.to_owned(),
        e.index.to_string(),
        num(e.estimate),
        num(e.pvalue),
        num(e.ci_lower),
        num(e.ci_upper),
        num(e.stderr),
        opt(e.min_ess),
        e.flagged.to_string(),
    ]
}

fn model_notes(selected: &[usize], lambda: f64, sigma2: f64) -> Vec<String> {
    let cols: Vec<String> = selected.iter().map(usize::to_string).collect();
    vec![format!("selected: {}", cols.join(" ")), format!("lambda: {lambda}"), format!("sigma2: {sigma2}")]
}

impl Tabular for InferenceTable {
    fn header(&self) -> Vec<&'static str> {
        COORDINATE_HEADER.to_vec()
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.reports
            .iter()
            .flat_map(|r| r.entries.iter().map(|e| coordinate_record(r.method.as_str(), e)))
            .collect()
    }

    fn notes(&self) -> Vec<String> {
        model_notes(&self.selected, self.lambda, self.sigma2)
    }
}

impl Tabular for MleOutput {
    fn header(&self) -> Vec<&'static str> {
        COORDINATE_HEADER.to_vec()
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.report.entries.iter().map(|e| coordinate_record(self.report.method.as_str(), e)).collect()
    }

    fn notes(&self) -> Vec<String> {
        let mut v = model_notes(&self.selected, self.lambda, self.sigma2);
        v.push(format!("iterations: {}", self.iterations));
        v.push(format!("grad_norm: {}", self.grad_norm));
        if let Some(s) = self.stop {
            v.push(format!("stop: {}", label(&s)));
        }
        if let Some(f) = self.final_nll {
            v.push(format!("final_nll: {f}"));
        }
        v
    }
}

/// Serialized name of a unit enum variant.
fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{}: {source}", path.display())]
pub struct EmitError {
    pub path: PathBuf,
    pub source: io::Error,
}

/// Write `value` to `w` in the given format.
pub fn write_to<T: Tabular, W: Write>(value: &T, format: Format, mut w: W) -> io::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
        }
        Format::Csv => {
            for note in value.notes() {
                writeln!(w, "# {}", note.replace(['\n', '\r'], " "))?;
            }
            let mut out = csv::Writer::from_writer(&mut w);
            out.write_record(value.header())?;
            for record in value.records() {
                out.write_record(&record)?;
            }
            out.flush()?;
        }
    }
    w.flush()
}

/// Write `value` to `path`, or standard output when `path` is `None`.
pub fn emit<T: Tabular>(value: &T, format: Format, path: Option<&Path>) -> Result<(), EmitError> {
    match path {
        Some(p) => {
            let err = |source| EmitError { path: p.to_path_buf(), source };
            let file = File::create(p).map_err(err)?;
            write_to(value, format, BufWriter::new(file)).map_err(err)
        }
        None => write_to(value, format, io::stdout().lock())
            .map_err(|source| EmitError { path: PathBuf::from("<stdout>"), source }),
    }
}
