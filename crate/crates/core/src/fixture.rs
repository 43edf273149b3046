//! Seeded synthetic corpus generation for tests and demos.
//!
//! The generated corpus holds two models over two domains with two datasets
//! each. Model `sharp` separates every dataset perfectly but its useful
//! decision boundary moves between domains, so a threshold calibrated
//! across datasets transfers badly. Model `smooth` has overlapping
//! mid-range scores with one domain-stable boundary. The result: `sharp`
//! wins on per-dataset AUC while `smooth` wins on cross-domain calibrated
//! accuracy. Both properties are asserted at generation time.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::calibrate::Method;
use crate::corpus::{BenchmarkCorpus, CorpusError, DomainRegistry, ScoredRecord};
use crate::protocols::{self, ProtocolError, ProtocolSpec, Regime};

pub const SHARP_MODEL: &str = "sharp";
pub const SMOOTH_MODEL: &str = "smooth";

const DATASETS: [(&str, &str); 4] = [
    ("a1", "domain_a"),
    ("a2", "domain_a"),
    ("b1", "domain_b"),
    ("b2", "domain_b"),
];
const ITEMS_PER_DATASET: usize = 250;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("seeded draw does not exhibit the target property: {0}; retry with another seed")]
    AssertionFailed(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("could not write fixture: {0}")]
    Io(#[from] std::io::Error),
}

/// A generated corpus plus its registry, ready to serialize or load.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub seed: u64,
    pub records: Vec<ScoredRecord>,
    pub registry: DomainRegistry,
}

impl Fixture {
    pub fn corpus(&self) -> Result<BenchmarkCorpus, CorpusError> {
        BenchmarkCorpus::from_records(self.records.clone(), self.registry.clone())
    }

    /// Score table in the standard `model,dataset,item,score,label` layout.
    pub fn corpus_csv(&self) -> String {
        let mut out = String::from("model,dataset,item,score,label\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.model_id, r.dataset_id, r.item_id, r.score, r.label
            ));
        }
        out
    }

    pub fn registry_csv(&self) -> String {
        let mut out = String::from("dataset,domain\n");
        for (dataset, domain) in DATASETS {
            out.push_str(&format!("{dataset},{domain}\n"));
        }
        out
    }

    /// Write `corpus.csv` and `registry.csv` under `dir`, returning their paths.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf), FixtureError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let corpus_path = dir.join("corpus.csv");
        let registry_path = dir.join("registry.csv");
        std::fs::write(&corpus_path, self.corpus_csv())?;
        std::fs::write(&registry_path, self.registry_csv())?;
        Ok((corpus_path, registry_path))
    }
}

/// Generate the seeded fixture and verify its two defining properties:
/// every dataset's AUC ranks `sharp` at least as high as `smooth`, and the
/// cross-domain logistic accuracy mean ranks `smooth` strictly first.
pub fn generate(seed: u64) -> Result<Fixture, FixtureError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let smooth_neg = Normal::new(0.38, 0.13).expect("valid normal");
    let smooth_pos = Normal::new(0.62, 0.13).expect("valid normal");

    let mut records = Vec::with_capacity(2 * DATASETS.len() * ITEMS_PER_DATASET);
    for (dataset, domain) in DATASETS {
        for item in 0..ITEMS_PER_DATASET {
            let label = u8::from(rng.random_bool(0.5));
            // sharp: perfectly separated clusters, but the gap between them
            // sits at a different score level in each domain
            let sharp_score = match (domain, label) {
                ("domain_a", 0) => rng.random_range(0.005..0.035),
                ("domain_a", _) => rng.random_range(0.49..0.51),
                (_, 0) => rng.random_range(0.49..0.51),
                (_, _) => rng.random_range(0.965..0.995),
            };
            let smooth_draw: f64 = if label == 1 {
                smooth_pos.sample(&mut rng)
            } else {
                smooth_neg.sample(&mut rng)
            };
            let smooth_score = smooth_draw.clamp(0.0, 1.0);

            let item_id = format!("i{item:04}");
            records.push(ScoredRecord {
                model_id: SHARP_MODEL.to_string(),
                dataset_id: dataset.to_string(),
                item_id: item_id.clone(),
                score: sharp_score,
                label,
            });
            records.push(ScoredRecord {
                model_id: SMOOTH_MODEL.to_string(),
                dataset_id: dataset.to_string(),
                item_id,
                score: smooth_score,
                label,
            });
        }
    }

    let mut registry = DomainRegistry::default();
    for (dataset, domain) in DATASETS {
        registry.insert(dataset.to_string(), domain.to_string());
    }
    let fixture = Fixture {
        seed,
        records,
        registry,
    };
    verify(&fixture)?;
    Ok(fixture)
}

fn verify(fixture: &Fixture) -> Result<(), FixtureError> {
    let corpus = fixture.corpus()?;
    let auc_run = protocols::run_protocol(&corpus, &ProtocolSpec::auc_only(fixture.seed))?;
    for (dataset, _) in DATASETS {
        let sharp = cell_value(&auc_run, SHARP_MODEL, dataset);
        let smooth = cell_value(&auc_run, SMOOTH_MODEL, dataset);
        if sharp < smooth {
            return Err(FixtureError::AssertionFailed(format!(
                "AUC on {dataset}: sharp {sharp:.4} < smooth {smooth:.4}"
            )));
        }
    }

    let acc_run = protocols::run_protocol(
        &corpus,
        &ProtocolSpec::new(Regime::XDomain, Method::Logistic, fixture.seed),
    )?;
    let sharp_mean = mean_value(&acc_run, SHARP_MODEL);
    let smooth_mean = mean_value(&acc_run, SMOOTH_MODEL);
    if smooth_mean <= sharp_mean {
        return Err(FixtureError::AssertionFailed(format!(
            "xdomain accuracy mean: smooth {smooth_mean:.4} <= sharp {sharp_mean:.4}"
        )));
    }
    Ok(())
}

fn cell_value(run: &protocols::ProtocolRun, model: &str, dataset: &str) -> f64 {
    run.cells
        .iter()
        .find(|c| c.model_id == model && c.dataset_id == dataset)
        .map(|c| c.accuracy)
        .expect("fixture grid is complete")
}

fn mean_value(run: &protocols::ProtocolRun, model: &str) -> f64 {
    run.means
        .iter()
        .find(|m| m.model_id == model)
        .map(|m| m.accuracy)
        .expect("fixture grid is complete")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FileFormat;

    #[test]
    fn seed_42_exhibits_the_rank_flip() {
        let fixture = generate(42).expect("seed 42 passes both assertions");
        assert_eq!(fixture.records.len(), 2 * 4 * ITEMS_PER_DATASET);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let a = generate(42).unwrap();
        let b = generate(42).unwrap();
        assert_eq!(a.corpus_csv(), b.corpus_csv());
        assert_eq!(a.registry_csv(), b.registry_csv());
    }

    #[test]
    fn written_fixture_loads_cleanly() {
        let fixture = generate(42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (corpus_path, registry_path) = fixture.write_to(dir.path()).unwrap();
        let corpus = BenchmarkCorpus::load(corpus_path, FileFormat::Csv, registry_path).unwrap();
        assert_eq!(corpus.len(), fixture.records.len());
        assert_eq!(
            corpus.models(),
            &[SHARP_MODEL.to_string(), SMOOTH_MODEL.to_string()]
        );
        assert_eq!(corpus.datasets().len(), 4);
    }
}
