//! Command-line argument structs and their resolution into a validated run
//! configuration. Configuration problems exit with code 2, data problems
//! with code 1.

use std::path::PathBuf;

use calibench::analysis::AnalysisError;
use calibench::corpus::{BenchmarkCorpus, CorpusError, DomainRegistry, FileFormat};
use calibench::fixture::FixtureError;
use calibench::protocols::{ProtocolError, Regime};
use calibench::Method;
use clap::Args;
use thiserror::Error;

use crate::report::ReportFormat;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration errors, 1 for data/runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Flags shared by every evaluation subcommand.
#[derive(Debug, Args)]
pub struct IoArgs {
    /// Score table with columns model,dataset,item,score,label
    #[arg(long)]
    pub corpus: PathBuf,
    /// Dataset-to-domain registry (dataset,domain); the builtin registry
    /// for the standard faithfulness benchmark layout is used when omitted
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Score file layout: csv or jsonl
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// Base seed for randomized splits; required when a selected regime
    /// uses them (indata, indomain)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for report files
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Report format: markdown, csv, or json (a JSON mirror is always written)
    #[arg(long = "report-format", default_value = "markdown")]
    pub report_format: String,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Comma-separated calibration regimes
    /// (xdomain, outdomain, outdata, indomain, indata); default all five
    #[arg(long, value_delimiter = ',')]
    pub regime: Vec<String>,
    /// Comma-separated calibration methods (logistic, isotonic, stump);
    /// default all three
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<String>,
    /// Repetitions for in-data splits
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Training fraction for in-data splits
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Comma-separated calibration regimes; default all five
    #[arg(long, value_delimiter = ',')]
    pub regime: Vec<String>,
    /// Repetitions for in-data splits
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Training fraction for in-data splits
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Regime for the accuracy side of the comparison
    #[arg(long, default_value = "xdomain")]
    pub regime: String,
    /// Method for the accuracy side of the comparison
    #[arg(long, default_value = "logistic")]
    pub method: String,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    /// Histogram bin count
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Generator seed; the draw is rejected (exit 1) if it does not exhibit
    /// the AUC/accuracy rank flip
    #[arg(long)]
    pub seed: u64,
    /// Directory receiving corpus.csv and registry.csv
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// A fully resolved and validated evaluation configuration.
#[derive(Debug)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    pub registry_path: Option<PathBuf>,
    pub format: FileFormat,
    pub regimes: Vec<Regime>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub indata_reps: usize,
    pub indata_ratio: f64,
    pub out_dir: PathBuf,
    pub report_format: ReportFormat,
}

fn parse_list<T>(raw: &[String], defaults: &[T]) -> Result<Vec<T>, CliError>
where
    T: std::str::FromStr<Err = String> + Clone,
{
    if raw.is_empty() {
        return Ok(defaults.to_vec());
    }
    raw.iter()
        .map(|s| s.parse::<T>().map_err(CliError::Config))
        .collect()
}

impl RunConfig {
    pub fn resolve(
        io: &IoArgs,
        regimes_raw: &[String],
        methods_raw: &[String],
        reps: usize,
        ratio: f64,
        default_regimes: &[Regime],
        default_methods: &[Method],
    ) -> Result<Self, CliError> {
        if !io.corpus.exists() {
            return Err(CliError::Config(format!(
                "corpus file not found: {}",
                io.corpus.display()
            )));
        }
        if let Some(registry) = &io.registry {
            if !registry.exists() {
                return Err(CliError::Config(format!(
                    "registry file not found: {}",
                    registry.display()
                )));
            }
        }
        let format: FileFormat = io.format.parse().map_err(CliError::Config)?;
        let report_format: ReportFormat = io.report_format.parse().map_err(CliError::Config)?;
        let regimes: Vec<Regime> = parse_list(regimes_raw, default_regimes)?;
        if regimes.is_empty() {
            return Err(CliError::Config("no regime selected".into()));
        }
        if !regimes_raw.is_empty() && regimes.contains(&Regime::AucOnly) {
            return Err(CliError::Config(
                "auconly is covered by the `auc` subcommand".into(),
            ));
        }
        let methods: Vec<Method> = parse_list(methods_raw, default_methods)?;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(CliError::Config(format!(
                "--ratio must be in (0, 1), got {ratio}"
            )));
        }
        if reps == 0 {
            return Err(CliError::Config("--reps must be at least 1".into()));
        }
        let needs_seed = regimes.iter().any(Regime::uses_random_splits);
        let seed = match (io.seed, needs_seed) {
            (Some(seed), _) => seed,
            (None, false) => 0,
            (None, true) => {
                return Err(CliError::Config(
                    "--seed is required for regimes with randomized splits (indata, indomain)"
                        .into(),
                ))
            }
        };
        Ok(Self {
            corpus_path: io.corpus.clone(),
            registry_path: io.registry.clone(),
            format,
            regimes,
            methods,
            seed,
            indata_reps: reps,
            indata_ratio: ratio,
            out_dir: io.out.clone(),
            report_format,
        })
    }

    pub fn load_corpus(&self) -> Result<BenchmarkCorpus, CliError> {
        let registry = match &self.registry_path {
            Some(path) => DomainRegistry::load(path)?,
            None => calibench::corpus::default_registry(),
        };
        Ok(BenchmarkCorpus::load_with_registry(
            &self.corpus_path,
            self.format,
            registry,
        )?)
    }

    /// Header entries recorded in every report.
    pub fn meta(&self) -> Vec<(String, String)> {
        vec![
            ("corpus".into(), self.corpus_path.display().to_string()),
            (
                "registry".into(),
                self.registry_path
                    .as_ref()
                    .map_or("<builtin>".to_string(), |p| p.display().to_string()),
            ),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}
