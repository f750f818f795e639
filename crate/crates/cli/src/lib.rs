//! Command-line front end: data ingestion, configuration, the simulation
//! study, sampler comparison and result export.

pub mod emit;
pub mod ingest;
pub mod settings;

use std::io::Write;
use std::sync::Arc;

use selsov::inference::{selective_mle, InferenceReport, Method, MleOptions};
use selsov::seeds::{self, stream};
use selsov::selection::{estimate_sigma2, Dataset, SelectionRecord};
use selsov::study::{self, compare_record, run_compare, run_simulation, select, simulate};
use thiserror::Error;

use crate::emit::{emit, EmitError, InferenceTable, MleOutput, Tabular};
use crate::ingest::{ingest_csv, IngestError};
use crate::settings::{manifest, Command, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Ingest(#[from] IngestError),

    #[error("data error: {0}")]
    Emit(#[from] EmitError),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(selsov::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Ingest(_) | Self::Emit(_) | Self::Data(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}

impl From<selsov::Error> for CliError {
    fn from(e: selsov::Error) -> Self {
        use selsov::Error as E;
        match e {
            E::InvalidInput(_) | E::RankDeficient(_) | E::EmptyModel | E::UnsupportedDimension { .. } => {
                Self::Data(e.to_string())
            }
            other => Self::Numerical(other),
        }
    }
}

/// Load the dataset named by the settings, or simulate repetition 0.
fn load(settings: &Settings) -> Result<Dataset, CliError> {
    match &settings.data {
        Some(spec) => {
            let data = ingest_csv(&spec.design, &spec.response, &spec.ingest)?.dataset;
            let sigma2 = match spec.sigma2 {
                Some(s) => s,
                None if data.n() > data.p() => estimate_sigma2(&data)?,
                None => {
                    return Err(CliError::Data(format!(
                        "n = {} does not exceed p = {}; pass --sigma2",
                        data.n(),
                        data.p()
                    )))
                }
            };
            Ok(data.with_sigma2(sigma2)?)
        }
        None => Ok(simulate(&settings.config, 0)?.data),
    }
}

fn selected(settings: &Settings) -> Result<(Arc<Dataset>, Option<SelectionRecord>), CliError> {
    let data = Arc::new(load(settings)?);
    let rec = select(&settings.config, data.clone(), 0)?;
    Ok((data, rec))
}

fn model_summary(data: &Dataset, rec: Option<&SelectionRecord>) -> (Vec<usize>, f64, f64) {
    (
        rec.map(|r| r.active.clone()).unwrap_or_default(),
        rec.map_or(f64::NAN, |r| r.lambda),
        data.sigma2().unwrap_or(f64::NAN),
    )
}

fn run_infer(settings: &Settings) -> Result<InferenceTable, CliError> {
    let cfg = &settings.config;
    let (data, rec) = selected(settings)?;
    let (selected, lambda, sigma2) = model_summary(&data, rec.as_ref());
    let reports = match &rec {
        Some(rec) => cfg
            .methods
            .iter()
            .map(|&m| study::infer(rec, cfg, m, 0))
            .collect::<selsov::Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(InferenceTable { selected, lambda, sigma2, reports })
}

fn run_mle(settings: &Settings) -> Result<MleOutput, CliError> {
    let cfg = &settings.config;
    let (data, rec) = selected(settings)?;
    let (selected, lambda, sigma2) = model_summary(&data, rec.as_ref());
    let Some(rec) = rec else {
        return Ok(MleOutput {
            selected,
            lambda,
            sigma2,
            iterations: 0,
            grad_norm: 0.0,
            stop: None,
            final_nll: None,
            report: InferenceReport { method: Method::MleSov, entries: Vec::new() },
        });
    };
    let opts = MleOptions {
        points: cfg.batch_size(),
        batches: cfg.batches,
        alpha: cfg.alpha,
        seed: seeds::derive(cfg.seed, &[stream::MLE, 0]),
        ..MleOptions::default()
    };
    let fit = selective_mle(&rec, &opts)?;
    Ok(MleOutput {
        selected,
        lambda,
        sigma2,
        iterations: fit.iterations,
        grad_norm: fit.grad_norm,
        stop: Some(fit.stop),
        final_nll: fit.nll.last().copied(),
        report: fit.report(&rec),
    })
}

fn run_compare_samplers(settings: &Settings) -> Result<study::CompareTable, CliError> {
    if settings.data.is_none() {
        return Ok(run_compare(&settings.config)?);
    }
    let (_, rec) = selected(settings)?;
    let rec = rec.ok_or(selsov::Error::EmptyModel)?;
    Ok(compare_record(&rec, &settings.config)?)
}

fn finish<T: Tabular>(settings: &Settings, value: &T) -> Result<(), CliError> {
    emit(value, settings.format, settings.out.as_deref())?;
    let text = manifest(settings).map_err(|e| CliError::Data(format!("manifest: {e}")))?;
    match &settings.out {
        Some(out) => {
            let mut path = out.clone().into_os_string();
            path.push(".manifest.toml");
            std::fs::write(&path, text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.to_string_lossy())))?;
        }
        None => {
            let mut err = std::io::stderr().lock();
            let _ = writeln!(err, "# manifest");
            let _ = err.write_all(text.as_bytes());
        }
    }
    Ok(())
}

/// Run one resolved command.
pub fn execute(settings: &Settings) -> Result<(), CliError> {
    match settings.command {
        Command::Simulate => {
            let table = run_simulation(&settings.config)?;
            for f in &table.failures {
                eprintln!("warning: {f}");
            }
            finish(settings, &table)
        }
        Command::Infer => finish(settings, &run_infer(settings)?),
        Command::Mle => finish(settings, &run_mle(settings)?),
        Command::CompareSamplers => finish(settings, &run_compare_samplers(settings)?),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match settings::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = settings::resolve(cli.command, &cli.opts)
        .map_err(CliError::Config)
        .and_then(|s| execute(&s));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
