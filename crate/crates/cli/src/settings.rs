//! Command-line arguments, config files and run manifests.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use selsov::inference::Method;
use selsov::study::{ExperimentConfig, LambdaRule, Scenario};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::emit::Format;
use crate::ingest::{IngestOptions, ResponseSource};

#[derive(Debug, Parser)]
#[command(name = "selsov", version, about = "Selective inference after randomized lasso selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Repeated simulate-select-infer study with coverage and length summaries.
    Simulate,
    /// Selective p-values and intervals for one dataset.
    Infer,
    /// SOV against hit-and-run p-value precision over independent randomizations.
    CompareSamplers,
    /// Selective maximum likelihood with optimizer diagnostics.
    Mle,
}

impl Command {
    pub fn scenario(self) -> Scenario {
        match self {
            Self::Simulate => Scenario::Simulate,
            Self::Infer => Scenario::Infer,
            Self::CompareSamplers => Scenario::CompareSamplers,
            Self::Mle => Scenario::Mle,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Infer => "infer",
            Self::CompareSamplers => "compare-samplers",
            Self::Mle => "mle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LambdaArg {
    Theory,
    Cv,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML file of config keys; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Design matrix CSV (simulated data is used when absent).
    #[arg(long, global = true)]
    pub design: Option<PathBuf>,
    /// Single-column response CSV.
    #[arg(long, global = true, conflicts_with = "response_column")]
    pub response: Option<PathBuf>,
    /// Response column inside the design file, by header name or 0-based index.
    #[arg(long, global = true)]
    pub response_column: Option<String>,
    /// Treat the first CSV row as a header.
    #[arg(long, global = true)]
    pub header: bool,
    /// Drop design columns with fewer nonzero entries than this.
    #[arg(long, global = true)]
    pub min_feature_count: Option<usize>,
    /// Known noise variance for ingested data (estimated when n > p).
    #[arg(long, global = true)]
    pub sigma2: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// RQMC points per inference (per randomization for compare-samplers).
    #[arg(long, global = true)]
    pub rqmc_n: Option<usize>,
    /// Independent randomizations behind the compare-samplers error estimates.
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub lambda: Option<LambdaArg>,
    /// Carving fraction.
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    #[arg(long, global = true)]
    pub repetitions: Option<usize>,
    /// Comma-separated methods: splitting, cdf-sov, mle-sov, hit-and-run.
    #[arg(long, global = true, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Add wall-clock columns (output is then not reproducible).
    #[arg(long, global = true)]
    pub timing: bool,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

/// Keys a config file may hold besides the experiment fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileKeys {
    pub design: Option<PathBuf>,
    pub response: Option<PathBuf>,
    pub response_column: Option<String>,
    pub header: bool,
    pub min_feature_count: Option<usize>,
    pub sigma2: Option<f64>,
    pub format: Option<Format>,
    /// Written by manifests; ignored on input.
    pub version: Option<String>,
    pub command: Option<String>,
    pub design_sha256: Option<String>,
    pub response_sha256: Option<String>,
}

const FILE_KEYS: [&str; 11] = [
    "design",
    "response",
    "response_column",
    "header",
    "min_feature_count",
    "sigma2",
    "format",
    "version",
    "command",
    "design_sha256",
    "response_sha256",
];

/// Data source for commands that act on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub design: PathBuf,
    pub response: ResponseSource,
    pub ingest: IngestOptions,
    pub sigma2: Option<f64>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub command: Command,
    pub config: ExperimentConfig,
    pub data: Option<DataSpec>,
    pub format: Format,
    pub out: Option<PathBuf>,
}

/// Split a flat TOML table into the experiment config and the remaining keys.
pub fn parse_config(text: &str) -> Result<(ExperimentConfig, FileKeys), String> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
    let mut rest = toml::Table::new();
    for key in FILE_KEYS {
        if let Some(v) = table.remove(key) {
            rest.insert(key.to_owned(), v);
        }
    }
    let cfg = ExperimentConfig::deserialize(table).map_err(|e| e.to_string())?;
    let keys = FileKeys::deserialize(rest).map_err(|e| e.to_string())?;
    Ok((cfg, keys))
}

/// Merge defaults, the config file and flags. Errors are config errors.
pub fn resolve(command: Command, flags: &Flags) -> Result<Settings, String> {
    let (mut cfg, keys) = match &flags.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => (ExperimentConfig::default(), FileKeys::default()),
    };
    cfg.scenario = command.scenario();
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = flags.rqmc_n {
        match command {
            Command::CompareSamplers => cfg.compare_n = v,
            _ => cfg.rqmc_n = v,
        }
    }
    if let Some(v) = flags.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = flags.lambda {
        cfg.lambda = match v {
            LambdaArg::Theory => LambdaRule::Theory,
            LambdaArg::Cv => LambdaRule::Cv,
        };
    }
    if let Some(v) = flags.rho {
        cfg.rho = v;
    }
    if let Some(v) = flags.repetitions {
        cfg.repetitions = v;
    }
    if let Some(v) = &flags.methods {
        cfg.methods = v.clone();
    }
    if flags.timing {
        cfg.timing = true;
    }
    cfg.validate().map_err(|e| e.to_string())?;

    let design = flags.design.clone().or(keys.design);
    let response = match (&flags.response, &flags.response_column) {
        (Some(p), _) => Some(ResponseSource::File(p.clone())),
        (_, Some(c)) => Some(ResponseSource::Column(c.clone())),
        _ => match (keys.response, keys.response_column) {
            (Some(_), Some(_)) => return Err("set only one of response and response_column".into()),
            (Some(p), None) => Some(ResponseSource::File(p)),
            (None, Some(c)) => Some(ResponseSource::Column(c)),
            (None, None) => None,
        },
    };
    let data = match (design, response) {
        (Some(design), Some(response)) => {
            if command == Command::Simulate {
                return Err("simulate generates its own data; drop the design and response".into());
            }
            Some(DataSpec {
                design,
                response,
                ingest: IngestOptions {
                    header: flags.header || keys.header,
                    min_feature_count: flags.min_feature_count.or(keys.min_feature_count),
                },
                sigma2: flags.sigma2.or(keys.sigma2),
            })
        }
        (None, None) => None,
        (Some(_), None) => return Err("a design needs a response file or column".into()),
        (None, Some(_)) => return Err("a response needs a design".into()),
    };
    if let Some(s) = data.as_ref().and_then(|d| d.sigma2) {
        if !(s > 0.0 && s.is_finite()) {
            return Err(format!("sigma2 must be positive, got {s}"));
        }
    }

    Ok(Settings {
        command,
        config: cfg,
        data,
        format: flags.format.or(keys.format).unwrap_or_default(),
        out: flags.out.clone(),
    })
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// A config file that reproduces this run, with input checksums.
pub fn manifest(settings: &Settings) -> std::io::Result<String> {
    let mut keys = FileKeys {
        version: Some(env!("CARGO_PKG_VERSION").to_owned()),
        command: Some(settings.command.name().to_owned()),
        format: Some(settings.format),
        ..FileKeys::default()
    };
    if let Some(d) = &settings.data {
        keys.design_sha256 = Some(sha256_file(&d.design)?);
        keys.design = Some(d.design.clone());
        match &d.response {
            ResponseSource::File(p) => {
                keys.response_sha256 = Some(sha256_file(p)?);
                keys.response = Some(p.clone());
            }
            ResponseSource::Column(c) => keys.response_column = Some(c.clone()),
        }
        keys.header = d.ingest.header;
        keys.min_feature_count = d.ingest.min_feature_count;
        keys.sigma2 = d.sigma2;
    }
    let mut table = toml::Table::try_from(&keys).map_err(std::io::Error::other)?;
    table.extend(toml::Table::try_from(&settings.config).map_err(std::io::Error::other)?);
    toml::to_string(&table).map_err(std::io::Error::other)
}
