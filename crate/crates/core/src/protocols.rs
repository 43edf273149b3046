//! Training-regime construction and grid evaluation: for each (model, test
//! dataset) pair, build the regime's calibration slice, fit the selected
//! method, decide on the test slice, and record expected accuracy and kappa.
//!
//! Grid cells are independent and evaluated in parallel; per-repetition
//! random splits derive their seeds from (base seed, model, dataset,
//! repetition), so parallel and sequential execution produce identical
//! results.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{self, Calibrator, ConstantCalibrator, LogisticConfig, Method};
use crate::corpus::{BenchmarkCorpus, CorpusError};
use crate::metrics;

/// Which data calibrates a model relative to the dataset it is tested on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Calibrate on every other dataset, regardless of domain.
    XDomain,
    /// Calibrate only on datasets from other domains.
    OutDomain,
    /// Calibrate on same-domain datasets, excluding the test dataset;
    /// singleton domains fall back to in-data splits.
    InDomain,
    /// Repeated random train/test splits within the dataset itself.
    InData,
    /// Calibrate on the dataset's own full data and measure the mean
    /// accuracy on every other dataset (how useful it is as a dev set).
    OutData,
    /// No calibration; the cell carries AUC instead of accuracy.
    AucOnly,
}

impl Regime {
    /// The five calibrated regimes, in report order.
    pub const CALIBRATED: [Regime; 5] = [
        Regime::XDomain,
        Regime::OutDomain,
        Regime::OutData,
        Regime::InDomain,
        Regime::InData,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Regime::XDomain => "xdomain",
            Regime::OutDomain => "outdomain",
            Regime::InDomain => "indomain",
            Regime::InData => "indata",
            Regime::OutData => "outdata",
            Regime::AucOnly => "auconly",
        }
    }

    /// Whether evaluation involves seeded random splits.
    pub fn uses_random_splits(&self) -> bool {
        matches!(self, Regime::InData | Regime::InDomain)
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "xdomain" => Ok(Regime::XDomain),
            "outdomain" => Ok(Regime::OutDomain),
            "indomain" => Ok(Regime::InDomain),
            "indata" => Ok(Regime::InData),
            "outdata" => Ok(Regime::OutData),
            "auconly" => Ok(Regime::AucOnly),
            other => Err(format!("unknown regime `{other}`")),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Errors raised while planning or running a protocol.
#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid protocol spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no training data for test dataset `{dataset}` under {regime}")]
    EmptyTrainingSet { regime: Regime, dataset: String },
    #[error("evaluation failed for (model={model}, dataset={dataset}): {reason}")]
    Cell {
        model: String,
        dataset: String,
        reason: String,
    },
}

/// A regime, a calibration method, and the split/seed settings for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub regime: Regime,
    /// Calibration method; `None` exactly when the regime is [`Regime::AucOnly`].
    pub method: Option<Method>,
    /// Training fraction for in-data splits.
    pub indata_ratio: f64,
    /// Number of seeded repetitions for in-data splits.
    pub indata_reps: usize,
    pub seed: u64,
}

impl ProtocolSpec {
    pub fn new(regime: Regime, method: Method, seed: u64) -> Self {
        Self {
            regime,
            method: Some(method),
            indata_ratio: 0.8,
            indata_reps: 100,
            seed,
        }
    }

    pub fn auc_only(seed: u64) -> Self {
        Self {
            regime: Regime::AucOnly,
            method: None,
            indata_ratio: 0.8,
            indata_reps: 100,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        match (self.regime, self.method) {
            (Regime::AucOnly, Some(_)) => {
                return Err(ProtocolError::InvalidSpec(
                    "auconly takes no calibration method".into(),
                ))
            }
            (Regime::AucOnly, None) => {}
            (_, None) => {
                return Err(ProtocolError::InvalidSpec(
                    "calibrated regimes require a method".into(),
                ))
            }
            (_, Some(_)) => {}
        }
        if !(self.indata_ratio > 0.0 && self.indata_ratio < 1.0) {
            return Err(ProtocolError::InvalidSpec(format!(
                "indata_ratio must be in (0, 1), got {}",
                self.indata_ratio
            )));
        }
        if self.indata_reps == 0 {
            return Err(ProtocolError::InvalidSpec(
                "indata_reps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Where a cell's calibration data comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainingPlan {
    /// Pool the records of these datasets; evaluate on the test dataset.
    Pooled(Vec<String>),
    /// Seeded random splits within the test dataset itself. `fallback` is
    /// set when an in-domain request degraded to this because the test
    /// dataset is alone in its domain.
    InDataSplit { fallback: bool },
    /// Fit on the dataset's own full data; evaluate on every other dataset.
    OwnData,
}

/// Resolve the training data for one test dataset under a regime.
pub fn training_sets(
    regime: Regime,
    corpus: &BenchmarkCorpus,
    test_dataset: &str,
) -> Result<TrainingPlan, ProtocolError> {
    let datasets = corpus.datasets();
    if !datasets.iter().any(|d| d == test_dataset) {
        return Err(CorpusError::UnknownDataset(test_dataset.to_string()).into());
    }
    match regime {
        Regime::XDomain => {
            let train: Vec<String> = datasets
                .iter()
                .filter(|d| d.as_str() != test_dataset)
                .cloned()
                .collect();
            if train.is_empty() {
                return Err(ProtocolError::EmptyTrainingSet {
                    regime,
                    dataset: test_dataset.to_string(),
                });
            }
            Ok(TrainingPlan::Pooled(train))
        }
        Regime::OutDomain => {
            let domain = corpus.domain_of(test_dataset)?.to_string();
            let train: Vec<String> = datasets
                .iter()
                .filter(|d| corpus.registry().domain_of(d) != Some(domain.as_str()))
                .cloned()
                .collect();
            if train.is_empty() {
                return Err(ProtocolError::EmptyTrainingSet {
                    regime,
                    dataset: test_dataset.to_string(),
                });
            }
            Ok(TrainingPlan::Pooled(train))
        }
        Regime::InDomain => {
            let train: Vec<String> = corpus
                .same_domain_datasets(test_dataset)?
                .into_iter()
                .filter(|d| d != test_dataset)
                .collect();
            if train.is_empty() {
                Ok(TrainingPlan::InDataSplit { fallback: true })
            } else {
                Ok(TrainingPlan::Pooled(train))
            }
        }
        Regime::InData => Ok(TrainingPlan::InDataSplit { fallback: false }),
        Regime::OutData => Ok(TrainingPlan::OwnData),
        Regime::AucOnly => Err(ProtocolError::InvalidSpec(
            "auconly has no training sets".into(),
        )),
    }
}

/// One grid entry: a model evaluated on a dataset under the run's spec.
/// For [`Regime::AucOnly`] runs, `accuracy` holds the AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub model_id: String,
    pub dataset_id: String,
    pub accuracy: f64,
    pub kappa: f64,
    pub train_size: usize,
    /// Training data was missing or single-class; a constant majority
    /// predictor (or the 0.5 AUC placeholder) stands in.
    pub degenerate: bool,
    /// An in-domain request fell back to in-data splits (singleton domain).
    pub indata_fallback: bool,
}

/// Per-model unweighted mean over the dataset rows present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMean {
    pub model_id: String,
    pub accuracy: f64,
    pub kappa: f64,
}

/// The full evaluation grid for one spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub spec: ProtocolSpec,
    /// Model-major, dataset-minor, covering the pairs present in the corpus.
    pub cells: Vec<EvalCell>,
    pub means: Vec<ModelMean>,
}

impl ProtocolRun {
    /// Cells of one model, in corpus dataset order.
    pub fn model_cells(&self, model: &str) -> Vec<&EvalCell> {
        self.cells.iter().filter(|c| c.model_id == model).collect()
    }

    /// Long-format CSV: `model,dataset,metric,value,rank,degenerate`, with
    /// per-dataset rows ranked across models and a `mean` row per model.
    /// AucOnly runs emit the `auc` metric; calibrated runs emit `accuracy`
    /// and `kappa`.
    pub fn to_long_csv(&self, corpus_datasets: &[String]) -> String {
        let mut out = String::from("model,dataset,metric,value,rank,degenerate\n");
        let models: Vec<&str> = self.means.iter().map(|m| m.model_id.as_str()).collect();
        type MetricColumn = (&'static str, fn(&EvalCell) -> f64);
        let metrics: &[MetricColumn] = if self.spec.regime == Regime::AucOnly {
            &[("auc", |c: &EvalCell| c.accuracy)]
        } else {
            &[
                ("accuracy", |c: &EvalCell| c.accuracy),
                ("kappa", |c: &EvalCell| c.kappa),
            ]
        };
        for (metric_name, extract) in metrics {
            for dataset in corpus_datasets {
                let row: Vec<(&str, f64, bool)> = models
                    .iter()
                    .filter_map(|m| {
                        self.cells
                            .iter()
                            .find(|c| c.model_id == *m && c.dataset_id == *dataset)
                            .map(|c| (*m, extract(c), c.degenerate))
                    })
                    .collect();
                if row.is_empty() {
                    continue;
                }
                let values: Vec<f64> = row.iter().map(|(_, v, _)| *v).collect();
                let ranks = crate::analysis::rank_values(&values);
                for ((model, value, degenerate), rank) in row.iter().zip(ranks) {
                    out.push_str(&format!(
                        "{model},{dataset},{metric_name},{value},{rank},{degenerate}\n"
                    ));
                }
            }
            let mean_values: Vec<f64> = self
                .means
                .iter()
                .map(|m| match *metric_name {
                    "kappa" => m.kappa,
                    _ => m.accuracy,
                })
                .collect();
            let ranks = crate::analysis::rank_values(&mean_values);
            for ((model, value), rank) in models.iter().zip(&mean_values).zip(ranks) {
                out.push_str(&format!(
                    "{model},mean,{metric_name},{value},{rank},false\n"
                ));
            }
        }
        out
    }
}

/// Deterministic per-repetition RNG from (seed, model, dataset, repetition).
fn derive_rng(seed: u64, model: &str, dataset: &str, rep: u64) -> ChaCha12Rng {
    fn eat(mut h: u64, bytes: &[u8]) -> u64 {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        h
    }
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    h = eat(h, &seed.to_le_bytes());
    h = eat(h, model.as_bytes());
    h = eat(h, &[0xff]);
    h = eat(h, dataset.as_bytes());
    h = eat(h, &[0xff]);
    h = eat(h, &rep.to_le_bytes());
    ChaCha12Rng::seed_from_u64(h)
}

/// The train/test index partition used by repetition `rep` of an in-data
/// split: a seeded shuffle of `0..n` with the first `floor(ratio * n)`
/// indices training.
pub fn indata_split_indices(
    seed: u64,
    model: &str,
    dataset: &str,
    rep: u64,
    n: usize,
    ratio: f64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = derive_rng(seed, model, dataset, rep);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let cut = (ratio * n as f64).floor() as usize;
    let test = indices.split_off(cut);
    (indices, test)
}

/// Majority-class constant predictor for empty or single-class training
/// slices; an empty slice (and an exact tie) decides negative.
fn majority_fallback(labels: &[u8]) -> Calibrator {
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let decision = u8::from(2 * positives > labels.len());
    Calibrator::Constant(ConstantCalibrator { decision })
}

fn fit_or_fallback(
    method: Method,
    scores: &[f64],
    labels: &[u8],
) -> Result<(Calibrator, bool), calibrate::CalibrateError> {
    if labels.is_empty() || labels.iter().all(|&y| y == labels[0]) {
        return Ok((majority_fallback(labels), true));
    }
    let calibrator = calibrate::fit(method, scores, labels, &LogisticConfig::default())?;
    Ok((calibrator, false))
}

struct CellOutcome {
    accuracy: f64,
    kappa: f64,
    train_size: usize,
    degenerate: bool,
    indata_fallback: bool,
}

fn cell_error(model: &str, dataset: &str, reason: impl ToString) -> ProtocolError {
    ProtocolError::Cell {
        model: model.to_string(),
        dataset: dataset.to_string(),
        reason: reason.to_string(),
    }
}

/// Evaluate one (model, dataset) grid cell under a spec. Pure and
/// deterministic; [`run_protocol`] calls this for every pair in parallel.
pub fn evaluate_cell(
    corpus: &BenchmarkCorpus,
    spec: &ProtocolSpec,
    model: &str,
    dataset: &str,
) -> Result<EvalCell, ProtocolError> {
    let outcome = match spec.regime {
        Regime::AucOnly => auc_cell(corpus, model, dataset)?,
        _ => {
            let Some(method) = spec.method else {
                return Err(ProtocolError::InvalidSpec(
                    "calibrated regimes require a method".into(),
                ));
            };
            match training_sets(spec.regime, corpus, dataset) {
                Ok(TrainingPlan::Pooled(train_datasets)) => {
                    pooled_cell(corpus, method, model, dataset, &train_datasets)?
                }
                Ok(TrainingPlan::InDataSplit { fallback }) => {
                    indata_cell(corpus, spec, method, model, dataset, fallback)?
                }
                Ok(TrainingPlan::OwnData) => outdata_cell(corpus, method, model, dataset)?,
                Err(ProtocolError::EmptyTrainingSet { .. }) => CellOutcome {
                    accuracy: empty_training_accuracy(corpus, model, dataset)?,
                    kappa: 0.0,
                    train_size: 0,
                    degenerate: true,
                    indata_fallback: false,
                },
                Err(e) => return Err(e),
            }
        }
    };
    Ok(EvalCell {
        model_id: model.to_string(),
        dataset_id: dataset.to_string(),
        accuracy: outcome.accuracy,
        kappa: outcome.kappa,
        train_size: outcome.train_size,
        degenerate: outcome.degenerate,
        indata_fallback: outcome.indata_fallback,
    })
}

fn auc_cell(
    corpus: &BenchmarkCorpus,
    model: &str,
    dataset: &str,
) -> Result<CellOutcome, ProtocolError> {
    let (scores, labels) = corpus.slice(model, std::slice::from_ref(&dataset.to_string()))?;
    if corpus.is_degenerate_pair(model, dataset) {
        return Ok(CellOutcome {
            accuracy: 0.5,
            kappa: 0.0,
            train_size: 0,
            degenerate: true,
            indata_fallback: false,
        });
    }
    let value = metrics::auc(&scores, &labels).map_err(|e| cell_error(model, dataset, e))?;
    Ok(CellOutcome {
        accuracy: value,
        kappa: 0.0,
        train_size: 0,
        degenerate: false,
        indata_fallback: false,
    })
}

fn test_scores(
    corpus: &BenchmarkCorpus,
    model: &str,
    dataset: &str,
) -> Result<(Vec<f64>, Vec<u8>), ProtocolError> {
    Ok(corpus.slice(model, std::slice::from_ref(&dataset.to_string()))?)
}

fn empty_training_accuracy(
    corpus: &BenchmarkCorpus,
    model: &str,
    dataset: &str,
) -> Result<f64, ProtocolError> {
    let (scores, labels) = test_scores(corpus, model, dataset)?;
    let predictor = majority_fallback(&[]);
    let predictions = predictor.decide_all(&scores);
    metrics::accuracy(&predictions, &labels).map_err(|e| cell_error(model, dataset, e))
}

fn pooled_cell(
    corpus: &BenchmarkCorpus,
    method: Method,
    model: &str,
    dataset: &str,
    train_datasets: &[String],
) -> Result<CellOutcome, ProtocolError> {
    let (train_scores, train_labels) = corpus.slice(model, train_datasets)?;
    let (calibrator, degenerate) = fit_or_fallback(method, &train_scores, &train_labels)
        .map_err(|e| cell_error(model, dataset, e))?;
    let (test_s, test_l) = test_scores(corpus, model, dataset)?;
    let predictions = calibrator.decide_all(&test_s);
    let accuracy =
        metrics::accuracy(&predictions, &test_l).map_err(|e| cell_error(model, dataset, e))?;
    let kappa = metrics::kappa(&predictions, &test_l).map_err(|e| cell_error(model, dataset, e))?;
    Ok(CellOutcome {
        accuracy,
        kappa,
        train_size: train_scores.len(),
        degenerate,
        indata_fallback: false,
    })
}

fn indata_cell(
    corpus: &BenchmarkCorpus,
    spec: &ProtocolSpec,
    method: Method,
    model: &str,
    dataset: &str,
    fallback: bool,
) -> Result<CellOutcome, ProtocolError> {
    let (scores, labels) = test_scores(corpus, model, dataset)?;
    let n = scores.len();
    let mut accuracy_sum = 0.0;
    let mut kappa_sum = 0.0;
    let mut any_degenerate = false;
    for rep in 0..spec.indata_reps {
        let (train_idx, test_idx) =
            indata_split_indices(spec.seed, model, dataset, rep as u64, n, spec.indata_ratio);
        let train_s: Vec<f64> = train_idx.iter().map(|&i| scores[i]).collect();
        let train_l: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
        let test_s: Vec<f64> = test_idx.iter().map(|&i| scores[i]).collect();
        let test_l: Vec<u8> = test_idx.iter().map(|&i| labels[i]).collect();
        let (calibrator, degenerate) = fit_or_fallback(method, &train_s, &train_l)
            .map_err(|e| cell_error(model, dataset, e))?;
        any_degenerate |= degenerate;
        let predictions = calibrator.decide_all(&test_s);
        accuracy_sum +=
            metrics::accuracy(&predictions, &test_l).map_err(|e| cell_error(model, dataset, e))?;
        kappa_sum +=
            metrics::kappa(&predictions, &test_l).map_err(|e| cell_error(model, dataset, e))?;
    }
    let reps = spec.indata_reps as f64;
    Ok(CellOutcome {
        accuracy: accuracy_sum / reps,
        kappa: kappa_sum / reps,
        train_size: (spec.indata_ratio * n as f64).floor() as usize,
        degenerate: any_degenerate,
        indata_fallback: fallback,
    })
}

fn outdata_cell(
    corpus: &BenchmarkCorpus,
    method: Method,
    model: &str,
    dataset: &str,
) -> Result<CellOutcome, ProtocolError> {
    let (train_scores, train_labels) = test_scores(corpus, model, dataset)?;
    let (calibrator, fit_degenerate) = fit_or_fallback(method, &train_scores, &train_labels)
        .map_err(|e| cell_error(model, dataset, e))?;
    let mut accuracy_sum = 0.0;
    let mut kappa_sum = 0.0;
    let mut evaluated = 0usize;
    for other in corpus.datasets() {
        if other == dataset || !corpus.has_pair(model, other) {
            continue;
        }
        let (test_s, test_l) = test_scores(corpus, model, other)?;
        let predictions = calibrator.decide_all(&test_s);
        accuracy_sum +=
            metrics::accuracy(&predictions, &test_l).map_err(|e| cell_error(model, other, e))?;
        kappa_sum +=
            metrics::kappa(&predictions, &test_l).map_err(|e| cell_error(model, other, e))?;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Ok(CellOutcome {
            accuracy: 0.0,
            kappa: 0.0,
            train_size: train_scores.len(),
            degenerate: true,
            indata_fallback: false,
        });
    }
    Ok(CellOutcome {
        accuracy: accuracy_sum / evaluated as f64,
        kappa: kappa_sum / evaluated as f64,
        train_size: train_scores.len(),
        degenerate: fit_degenerate,
        indata_fallback: false,
    })
}

/// Run the full grid for one spec. Cells are computed in parallel; with the
/// same corpus, spec, and seed the result is identical to sequential
/// evaluation.
pub fn run_protocol(
    corpus: &BenchmarkCorpus,
    spec: &ProtocolSpec,
) -> Result<ProtocolRun, ProtocolError> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus.into());
    }
    let pairs: Vec<(String, String)> = corpus
        .models()
        .iter()
        .flat_map(|m| {
            corpus
                .datasets()
                .iter()
                .filter(|d| corpus.has_pair(m, d))
                .map(|d| (m.clone(), d.clone()))
        })
        .collect();

    let cells: Vec<EvalCell> = pairs
        .par_iter()
        .map(|(model, dataset)| evaluate_cell(corpus, spec, model, dataset))
        .collect::<Result<_, _>>()?;

    let means = compute_means(corpus.models(), &cells);
    Ok(ProtocolRun {
        spec: *spec,
        cells,
        means,
    })
}

fn compute_means(models: &[String], cells: &[EvalCell]) -> Vec<ModelMean> {
    models
        .iter()
        .filter_map(|model| {
            let rows: Vec<&EvalCell> = cells.iter().filter(|c| &c.model_id == model).collect();
            if rows.is_empty() {
                return None;
            }
            let n = rows.len() as f64;
            Some(ModelMean {
                model_id: model.clone(),
                accuracy: rows.iter().map(|c| c.accuracy).sum::<f64>() / n,
                kappa: rows.iter().map(|c| c.kappa).sum::<f64>() / n,
            })
        })
        .collect()
}

/// One cell of a best-over-methods kappa grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaBestCell {
    pub model_id: String,
    pub dataset_id: String,
    pub kappa: f64,
    pub degenerate: bool,
    pub indata_fallback: bool,
}

/// Best-over-methods kappa: the regime is run once per calibration method
/// and each cell (and each per-model mean) keeps the maximum kappa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaBestRun {
    pub regime: Regime,
    pub seed: u64,
    pub cells: Vec<KappaBestCell>,
    pub means: Vec<ModelMean>,
}

pub fn kappa_best_over_methods(
    corpus: &BenchmarkCorpus,
    regime: Regime,
    seed: u64,
) -> Result<KappaBestRun, ProtocolError> {
    kappa_best_over_methods_with(corpus, regime, seed, 0.8, 100)
}

/// [`kappa_best_over_methods`] with explicit in-data split settings.
pub fn kappa_best_over_methods_with(
    corpus: &BenchmarkCorpus,
    regime: Regime,
    seed: u64,
    indata_ratio: f64,
    indata_reps: usize,
) -> Result<KappaBestRun, ProtocolError> {
    if regime == Regime::AucOnly {
        return Err(ProtocolError::InvalidSpec(
            "kappa requires a calibrated regime".into(),
        ));
    }
    let runs: Vec<ProtocolRun> = Method::ALL
        .iter()
        .map(|&method| {
            let mut spec = ProtocolSpec::new(regime, method, seed);
            spec.indata_ratio = indata_ratio;
            spec.indata_reps = indata_reps;
            run_protocol(corpus, &spec)
        })
        .collect::<Result<_, _>>()?;

    let cells = runs[0]
        .cells
        .iter()
        .enumerate()
        .map(|(i, first)| KappaBestCell {
            model_id: first.model_id.clone(),
            dataset_id: first.dataset_id.clone(),
            kappa: runs
                .iter()
                .map(|r| r.cells[i].kappa)
                .fold(f64::NEG_INFINITY, f64::max),
            degenerate: runs.iter().all(|r| r.cells[i].degenerate),
            indata_fallback: first.indata_fallback,
        })
        .collect();

    let means = runs[0]
        .means
        .iter()
        .enumerate()
        .map(|(i, first)| ModelMean {
            model_id: first.model_id.clone(),
            accuracy: runs
                .iter()
                .map(|r| r.means[i].accuracy)
                .fold(f64::NEG_INFINITY, f64::max),
            kappa: runs
                .iter()
                .map(|r| r.means[i].kappa)
                .fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();

    Ok(KappaBestRun {
        regime,
        seed,
        cells,
        means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DomainRegistry, ScoredRecord};

    fn record(model: &str, dataset: &str, item: usize, score: f64, label: u8) -> ScoredRecord {
        ScoredRecord {
            model_id: model.to_string(),
            dataset_id: dataset.to_string(),
            item_id: format!("i{item:03}"),
            score,
            label,
        }
    }

    /// Three datasets: a and b share a domain, c is alone in another.
    fn three_dataset_corpus() -> BenchmarkCorpus {
        let registry = DomainRegistry::new([
            ("a".to_string(), "sum".to_string()),
            ("b".to_string(), "sum".to_string()),
            ("c".to_string(), "dialog".to_string()),
        ]);
        let mut records = Vec::new();
        for dataset in ["a", "b", "c"] {
            for item in 0..40 {
                let label = (item % 2) as u8;
                // score tracks the label perfectly
                let score = if label == 1 { 0.8 } else { 0.2 };
                records.push(record("m1", dataset, item, score, label));
            }
        }
        BenchmarkCorpus::from_records(records, registry).unwrap()
    }

    #[test]
    fn training_sets_match_set_algebra() {
        let corpus = three_dataset_corpus();
        assert_eq!(
            training_sets(Regime::XDomain, &corpus, "a").unwrap(),
            TrainingPlan::Pooled(vec!["b".to_string(), "c".to_string()])
        );
        assert_eq!(
            training_sets(Regime::OutDomain, &corpus, "a").unwrap(),
            TrainingPlan::Pooled(vec!["c".to_string()])
        );
        assert_eq!(
            training_sets(Regime::InDomain, &corpus, "a").unwrap(),
            TrainingPlan::Pooled(vec!["b".to_string()])
        );
        // c is the only dataset of its domain: in-domain falls back
        assert_eq!(
            training_sets(Regime::InDomain, &corpus, "c").unwrap(),
            TrainingPlan::InDataSplit { fallback: true }
        );
        assert_eq!(
            training_sets(Regime::InData, &corpus, "b").unwrap(),
            TrainingPlan::InDataSplit { fallback: false }
        );
        assert_eq!(
            training_sets(Regime::OutData, &corpus, "b").unwrap(),
            TrainingPlan::OwnData
        );
        assert!(matches!(
            training_sets(Regime::XDomain, &corpus, "nope"),
            Err(ProtocolError::Corpus(CorpusError::UnknownDataset(_)))
        ));
    }

    #[test]
    fn outdomain_single_domain_reports_empty_training() {
        let registry = DomainRegistry::new([
            ("a".to_string(), "sum".to_string()),
            ("b".to_string(), "sum".to_string()),
        ]);
        let records = vec![
            record("m1", "a", 0, 0.9, 1),
            record("m1", "a", 1, 0.1, 0),
            record("m1", "b", 0, 0.8, 1),
            record("m1", "b", 1, 0.2, 0),
        ];
        let corpus = BenchmarkCorpus::from_records(records, registry).unwrap();
        assert!(matches!(
            training_sets(Regime::OutDomain, &corpus, "a"),
            Err(ProtocolError::EmptyTrainingSet { .. })
        ));
        // the grid still runs, with degenerate cells
        let spec = ProtocolSpec::new(Regime::OutDomain, Method::Logistic, 1);
        let run = run_protocol(&corpus, &spec).unwrap();
        assert!(run.cells.iter().all(|c| c.degenerate));
    }

    #[test]
    fn perfect_model_scores_one_everywhere() {
        let corpus = three_dataset_corpus();
        for regime in Regime::CALIBRATED {
            for method in Method::ALL {
                let spec = ProtocolSpec::new(regime, method, 7);
                let run = run_protocol(&corpus, &spec).unwrap();
                for cell in &run.cells {
                    assert_eq!(
                        cell.accuracy, 1.0,
                        "{regime}/{method} on {}",
                        cell.dataset_id
                    );
                    // a random test split can be single-class, where the
                    // kappa convention yields 0 for that repetition
                    if !regime.uses_random_splits() {
                        assert_eq!(cell.kappa, 1.0);
                    }
                    assert!(!cell.degenerate);
                }
                for mean in &run.means {
                    assert_eq!(mean.accuracy, 1.0);
                }
            }
        }
    }

    #[test]
    fn auconly_run_reports_auc() {
        let corpus = three_dataset_corpus();
        let run = run_protocol(&corpus, &ProtocolSpec::auc_only(0)).unwrap();
        assert_eq!(run.cells.len(), 3);
        for cell in &run.cells {
            assert_eq!(cell.accuracy, 1.0); // perfectly separated scores
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ProtocolSpec::auc_only(0).validate().is_ok());
        let mut bad = ProtocolSpec::new(Regime::InData, Method::Stump, 0);
        bad.indata_ratio = 1.0;
        assert!(matches!(bad.validate(), Err(ProtocolError::InvalidSpec(_))));
        let mut bad = ProtocolSpec::auc_only(0);
        bad.method = Some(Method::Logistic);
        assert!(bad.validate().is_err());
        let mut bad = ProtocolSpec::new(Regime::XDomain, Method::Logistic, 0);
        bad.method = None;
        assert!(bad.validate().is_err());
    }

    /// Constant-score model under in-data splits: the calibrator collapses
    /// to the train-majority predictor, so per-repetition accuracy is the
    /// majority class rate of the test split.
    #[test]
    fn constant_score_model_predicts_majority() {
        let registry = DomainRegistry::new([
            ("a".to_string(), "sum".to_string()),
            ("b".to_string(), "sum".to_string()),
        ]);
        let mut records = Vec::new();
        for dataset in ["a", "b"] {
            for item in 0..40 {
                let label = u8::from(item % 4 != 0); // 30 positive, 10 negative
                records.push(record("m1", dataset, item, 0.5, label));
            }
        }
        let corpus = BenchmarkCorpus::from_records(records, registry).unwrap();
        let mut spec = ProtocolSpec::new(Regime::InData, Method::Logistic, 11);
        spec.indata_reps = 20;
        let run = run_protocol(&corpus, &spec).unwrap();

        let (_, labels) = corpus.slice("m1", &["a".to_string()]).unwrap();
        let mut expected_sum = 0.0;
        for rep in 0..20 {
            let (_, test_idx) = indata_split_indices(11, "m1", "a", rep, 40, 0.8);
            // 32 training items always contain both classes and majority 1
            let positives = test_idx.iter().filter(|&&i| labels[i] == 1).count();
            expected_sum += positives as f64 / test_idx.len() as f64;
        }
        let cell = &run.cells[0];
        assert_eq!(cell.dataset_id, "a");
        assert!((cell.accuracy - expected_sum / 20.0).abs() < 1e-12);
    }

    #[test]
    fn indata_is_bit_reproducible() {
        let corpus = three_dataset_corpus();
        let spec = ProtocolSpec::new(Regime::InData, Method::Stump, 7);
        let first = run_protocol(&corpus, &spec).unwrap();
        let second = run_protocol(&corpus, &spec).unwrap();
        assert_eq!(
            serde_json::to_string(&first).unwrap(),
            serde_json::to_string(&second).unwrap()
        );
    }

    #[test]
    fn parallel_equals_sequential() {
        let corpus = three_dataset_corpus();
        let spec = ProtocolSpec::new(Regime::InData, Method::Isotonic, 3);
        let parallel = run_protocol(&corpus, &spec).unwrap();
        let mut sequential = Vec::new();
        for model in corpus.models() {
            for dataset in corpus.datasets() {
                if corpus.has_pair(model, dataset) {
                    sequential.push(evaluate_cell(&corpus, &spec, model, dataset).unwrap());
                }
            }
        }
        assert_eq!(parallel.cells, sequential);
    }

    #[test]
    fn replayed_serialized_calibrator_reproduces_cell_accuracy() {
        let corpus = three_dataset_corpus();
        for method in Method::ALL {
            let spec = ProtocolSpec::new(Regime::XDomain, method, 0);
            let run = run_protocol(&corpus, &spec).unwrap();
            for cell in &run.cells {
                let plan = training_sets(Regime::XDomain, &corpus, &cell.dataset_id).unwrap();
                let TrainingPlan::Pooled(train) = plan else {
                    unreachable!()
                };
                let (ts, tl) = corpus.slice("m1", &train).unwrap();
                let (calibrator, _) = fit_or_fallback(method, &ts, &tl).unwrap();
                let json = serde_json::to_string(&calibrator).unwrap();
                let replayed: Calibrator = serde_json::from_str(&json).unwrap();
                let (es, el) = corpus
                    .slice("m1", std::slice::from_ref(&cell.dataset_id))
                    .unwrap();
                let predictions = replayed.decide_all(&es);
                let accuracy = metrics::accuracy(&predictions, &el).unwrap();
                assert_eq!(accuracy, cell.accuracy);
            }
        }
    }

    #[test]
    fn kappa_best_is_componentwise_max() {
        let corpus = three_dataset_corpus();
        let best = kappa_best_over_methods(&corpus, Regime::OutDomain, 5).unwrap();
        let singles: Vec<ProtocolRun> = Method::ALL
            .iter()
            .map(|&m| run_protocol(&corpus, &ProtocolSpec::new(Regime::OutDomain, m, 5)).unwrap())
            .collect();
        for (i, cell) in best.cells.iter().enumerate() {
            let expected = singles
                .iter()
                .map(|r| r.cells[i].kappa)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(cell.kappa, expected);
        }
        for (i, mean) in best.means.iter().enumerate() {
            let expected = singles
                .iter()
                .map(|r| r.means[i].kappa)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(mean.kappa, expected);
        }
    }

    #[test]
    fn xdomain_training_plus_test_covers_everything() {
        let corpus = three_dataset_corpus();
        let all: std::collections::BTreeSet<String> = corpus.datasets().iter().cloned().collect();
        for dataset in corpus.datasets() {
            let TrainingPlan::Pooled(train) =
                training_sets(Regime::XDomain, &corpus, dataset).unwrap()
            else {
                panic!()
            };
            let mut union: std::collections::BTreeSet<String> = train.into_iter().collect();
            assert!(!union.contains(dataset));
            union.insert(dataset.clone());
            assert_eq!(union, all);

            // out-domain and in-domain training sets nest inside xdomain's
            for regime in [Regime::OutDomain, Regime::InDomain] {
                if let Ok(TrainingPlan::Pooled(sub)) = training_sets(regime, &corpus, dataset) {
                    for d in sub {
                        assert_ne!(&d, dataset);
                        assert!(all.contains(&d));
                    }
                }
            }
        }
    }

    #[test]
    fn auconly_cells_invariant_under_monotone_transform() {
        let registry = DomainRegistry::new([
            ("a".to_string(), "sum".to_string()),
            ("b".to_string(), "dialog".to_string()),
        ]);
        let mut records = Vec::new();
        for dataset in ["a", "b"] {
            for item in 0..30 {
                let label = (item % 2) as u8;
                let score = (item as f64) / 30.0 + if label == 1 { 0.2 } else { 0.0 };
                records.push(record("m1", dataset, item, score, label));
            }
        }
        let transformed: Vec<ScoredRecord> = records
            .iter()
            .cloned()
            .map(|mut r| {
                r.score = (4.0 * r.score).exp();
                r
            })
            .collect();
        let base = BenchmarkCorpus::from_records(records, registry.clone()).unwrap();
        let warped = BenchmarkCorpus::from_records(transformed, registry).unwrap();
        let run_a = run_protocol(&base, &ProtocolSpec::auc_only(0)).unwrap();
        let run_b = run_protocol(&warped, &ProtocolSpec::auc_only(0)).unwrap();
        for (a, b) in run_a.cells.iter().zip(&run_b.cells) {
            assert!((a.accuracy - b.accuracy).abs() <= 1e-12);
        }
    }

    #[test]
    fn long_csv_has_expected_shape() {
        let corpus = three_dataset_corpus();
        let run = run_protocol(&corpus, &ProtocolSpec::auc_only(0)).unwrap();
        let csv = run.to_long_csv(corpus.datasets());
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "model,dataset,metric,value,rank,degenerate"
        );
        // 3 dataset rows + 1 mean row for one model
        assert_eq!(csv.lines().count(), 1 + 4);
        assert!(csv.contains("m1,mean,auc,1,1,false"));
    }
}
