//! Rankings, AUC-versus-accuracy rank deltas, score-variance grouping, and
//! histogram extraction over a corpus.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BenchmarkCorpus, CorpusError};
use crate::protocols::ProtocolRun;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("rank reports cover different model sets")]
    ModelSetMismatch,
    #[error("bin_count must be at least 1")]
    ZeroBins,
    #[error("no values to rank")]
    EmptyRow,
}

/// Competition ranks, 1 = best (highest value); tied values share the
/// smaller rank and the following rank is skipped.
pub fn rank_values(values: &[f64]) -> Vec<usize> {
    let mut ranks = vec![1usize; values.len()];
    for (i, v) in values.iter().enumerate() {
        ranks[i] += values.iter().filter(|&&other| other > *v).count();
    }
    ranks
}

/// One ranked table row: per-model values and their ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub label: String,
    /// Aligned with the report's model list; `None` when the model does not
    /// cover the row's dataset.
    pub values: Vec<Option<f64>>,
    pub ranks: Vec<Option<usize>>,
}

impl RankRow {
    /// Rank the present values of a (possibly partial) row.
    pub fn new(label: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        let present: Vec<f64> = values.iter().filter_map(|v| *v).collect();
        let present_ranks = rank_values(&present);
        let mut iter = present_ranks.into_iter();
        let ranks = values
            .iter()
            .map(|v| v.map(|_| iter.next().expect("one rank per value")))
            .collect();
        Self {
            label: label.into(),
            values,
            ranks,
        }
    }
}

/// Per-dataset and mean-row values with dense competition ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub models: Vec<String>,
    pub rows: Vec<RankRow>,
    pub mean: RankRow,
}

impl RankReport {
    /// Build the ranked per-dataset table plus mean row from a protocol
    /// run, ranking the run's primary value (accuracy, or AUC for an
    /// AUC-only run).
    pub fn from_run(run: &ProtocolRun, datasets: &[String]) -> Self {
        Self::from_run_with(run, datasets, |cell| cell.accuracy, |mean| mean.accuracy)
    }

    /// Same as [`RankReport::from_run`] but ranking kappa.
    pub fn from_run_kappa(run: &ProtocolRun, datasets: &[String]) -> Self {
        Self::from_run_with(run, datasets, |cell| cell.kappa, |mean| mean.kappa)
    }

    fn from_run_with(
        run: &ProtocolRun,
        datasets: &[String],
        cell_value: impl Fn(&crate::protocols::EvalCell) -> f64,
        mean_value: impl Fn(&crate::protocols::ModelMean) -> f64,
    ) -> Self {
        let models: Vec<String> = run.means.iter().map(|m| m.model_id.clone()).collect();
        let rows = datasets
            .iter()
            .filter_map(|dataset| {
                let values: Vec<Option<f64>> = models
                    .iter()
                    .map(|model| {
                        run.cells
                            .iter()
                            .find(|c| &c.model_id == model && &c.dataset_id == dataset)
                            .map(&cell_value)
                    })
                    .collect();
                if values.iter().all(Option::is_none) {
                    None
                } else {
                    Some(RankRow::new(dataset.clone(), values))
                }
            })
            .collect();
        let mean = RankRow::new(
            "mean",
            run.means.iter().map(|m| Some(mean_value(m))).collect(),
        );
        Self { models, rows, mean }
    }

    fn mean_rank_of(&self, index: usize) -> usize {
        self.mean.ranks[index].expect("mean row is total")
    }
}

/// How a model's rank moved between two reports; positive means it improved
/// under the second (accuracy) report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankDelta {
    pub model_id: String,
    pub rank_auc: usize,
    pub rank_acc: usize,
    /// `rank_auc - rank_acc`.
    pub delta: i64,
}

/// Mean-row rank deltas between an AUC report and an accuracy report over
/// the same models.
pub fn rank_delta(
    auc_report: &RankReport,
    acc_report: &RankReport,
) -> Result<Vec<RankDelta>, AnalysisError> {
    if auc_report.models != acc_report.models {
        return Err(AnalysisError::ModelSetMismatch);
    }
    Ok(auc_report
        .models
        .iter()
        .enumerate()
        .map(|(i, model)| {
            let rank_auc = auc_report.mean_rank_of(i);
            let rank_acc = acc_report.mean_rank_of(i);
            RankDelta {
                model_id: model.clone(),
                rank_auc,
                rank_acc,
                delta: rank_auc as i64 - rank_acc as i64,
            }
        })
        .collect())
}

/// Population variance of a model's scores pooled across all datasets.
/// Computed by Welford's single-pass update.
pub fn score_variance(corpus: &BenchmarkCorpus, model: &str) -> Result<f64, AnalysisError> {
    let scores = corpus.model_scores(model)?;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in scores.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    Ok(m2 / scores.len() as f64)
}

/// Models grouped by the sign of their mean-row rank delta, with the mean
/// of their pooled score variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaGroup {
    pub models: Vec<String>,
    pub mean_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaGroups {
    /// Rank improved under accuracy (delta > 0).
    pub better: DeltaGroup,
    /// Rank worsened under accuracy (delta < 0).
    pub worse: DeltaGroup,
    /// Rank unchanged; reported separately rather than merged into either
    /// moved group.
    pub unchanged: DeltaGroup,
}

/// Partition models by delta sign and attach per-group mean score variance.
pub fn group_by_delta(
    deltas: &[RankDelta],
    corpus: &BenchmarkCorpus,
) -> Result<DeltaGroups, AnalysisError> {
    let make = |pred: &dyn Fn(i64) -> bool| -> Result<DeltaGroup, AnalysisError> {
        let models: Vec<String> = deltas
            .iter()
            .filter(|d| pred(d.delta))
            .map(|d| d.model_id.clone())
            .collect();
        let mean_variance = if models.is_empty() {
            None
        } else {
            let mut sum = 0.0;
            for model in &models {
                sum += score_variance(corpus, model)?;
            }
            Some(sum / models.len() as f64)
        };
        Ok(DeltaGroup {
            models,
            mean_variance,
        })
    };
    Ok(DeltaGroups {
        better: make(&|d| d > 0)?,
        worse: make(&|d| d < 0)?,
        unchanged: make(&|d| d == 0)?,
    })
}

/// Equal-width histogram of a model's pooled scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub model_id: String,
    pub bin_count: usize,
    /// `bin_count + 1` strictly increasing edges spanning the observed range.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl HistogramSpec {
    /// CSV with one `(bin_start, bin_end, count)` row per bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count\n");
        for (i, count) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{count}\n",
                self.edges[i],
                self.edges[i + 1]
            ));
        }
        out
    }
}

/// Bin a model's pooled scores over `[min, max]` into `bin_count`
/// equal-width bins; the top edge is inclusive. A degenerate range (all
/// scores equal) yields one unit-width bin holding everything.
pub fn histogram(
    corpus: &BenchmarkCorpus,
    model: &str,
    bin_count: usize,
) -> Result<HistogramSpec, AnalysisError> {
    if bin_count == 0 {
        return Err(AnalysisError::ZeroBins);
    }
    let scores = corpus.model_scores(model)?;
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    if lo == hi {
        return Ok(HistogramSpec {
            model_id: model.to_string(),
            bin_count: 1,
            edges: vec![lo - 0.5, lo + 0.5],
            counts: vec![scores.len() as u64],
        });
    }

    let width = (hi - lo) / bin_count as f64;
    let edges: Vec<f64> = (0..=bin_count)
        .map(|i| {
            if i == bin_count {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let mut counts = vec![0u64; bin_count];
    for &s in &scores {
        let mut bin = ((s - lo) / width) as usize;
        if bin >= bin_count {
            bin = bin_count - 1;
        }
        counts[bin] += 1;
    }
    Ok(HistogramSpec {
        model_id: model.to_string(),
        bin_count,
        edges,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DomainRegistry, ScoredRecord};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn corpus_with_scores(per_model: &[(&str, Vec<f64>)]) -> BenchmarkCorpus {
        let registry = DomainRegistry::new([("d1".to_string(), "dom".to_string())]);
        let mut records = Vec::new();
        for (model, scores) in per_model {
            for (i, &score) in scores.iter().enumerate() {
                records.push(ScoredRecord {
                    model_id: model.to_string(),
                    dataset_id: "d1".to_string(),
                    item_id: format!("i{i:05}"),
                    score,
                    label: (i % 2) as u8,
                });
            }
        }
        BenchmarkCorpus::from_records(records, registry).unwrap()
    }

    #[test]
    fn rank_basic_and_ties() {
        assert_eq!(rank_values(&[0.9, 0.7, 0.8]), vec![1, 3, 2]);
        assert_eq!(rank_values(&[0.9, 0.9, 0.1]), vec![1, 1, 3]);
        assert_eq!(rank_values(&[0.5]), vec![1]);
    }

    #[test]
    fn rank_mean_row_example() {
        // mean AUC values for the three leaders: 81.5, 81.4, 80.7
        assert_eq!(rank_values(&[81.5, 81.4, 80.7]), vec![1, 2, 3]);
    }

    fn report(models: &[&str], means: &[f64]) -> RankReport {
        RankReport {
            models: models.iter().map(|m| m.to_string()).collect(),
            rows: vec![],
            mean: RankRow::new("mean", means.iter().map(|&v| Some(v)).collect()),
        }
    }

    #[test]
    fn delta_improvement_of_two_ranks() {
        // third by the first report, first by the second
        let auc = report(&["x", "y", "z"], &[0.80, 0.82, 0.81]);
        let acc = report(&["x", "y", "z"], &[0.75, 0.70, 0.72]);
        let deltas = rank_delta(&auc, &acc).unwrap();
        let x = &deltas[0];
        assert_eq!((x.rank_auc, x.rank_acc, x.delta), (3, 1, 2));
    }

    #[test]
    fn delta_zero_for_identical_reports() {
        let r = report(&["a", "b"], &[0.9, 0.8]);
        let deltas = rank_delta(&r, &r).unwrap();
        assert!(deltas.iter().all(|d| d.delta == 0));
    }

    #[test]
    fn delta_large_jump() {
        // rank 11 under the first report, rank 2 under the second
        let models: Vec<String> = (0..11).map(|i| format!("m{i}")).collect();
        let model_refs: Vec<&str> = models.iter().map(String::as_str).collect();
        let auc_means: Vec<f64> = (0..11).map(|i| 0.9 - 0.01 * i as f64).collect();
        let mut acc_means = auc_means.clone();
        acc_means[10] = 0.895; // last model jumps to second place
        let auc = report(&model_refs, &auc_means);
        let acc = report(&model_refs, &acc_means);
        let deltas = rank_delta(&auc, &acc).unwrap();
        assert_eq!(deltas[10].rank_auc, 11);
        assert_eq!(deltas[10].rank_acc, 2);
        assert_eq!(deltas[10].delta, 9);
    }

    #[test]
    fn delta_requires_same_models() {
        let a = report(&["a"], &[0.5]);
        let b = report(&["b"], &[0.5]);
        assert!(matches!(
            rank_delta(&a, &b),
            Err(AnalysisError::ModelSetMismatch)
        ));
    }

    #[test]
    fn variance_examples() {
        let corpus = corpus_with_scores(&[
            ("const", vec![0.4, 0.4, 0.4, 0.4]),
            ("bernoulli", vec![0.0, 1.0, 0.0, 1.0]),
            ("three", vec![0.1, 0.3, 0.5, 0.1]),
        ]);
        assert_eq!(score_variance(&corpus, "const").unwrap(), 0.0);
        assert!((score_variance(&corpus, "bernoulli").unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn variance_hand_computation() {
        let corpus = corpus_with_scores(&[("m", vec![0.1, 0.3, 0.5])]);
        let v = score_variance(&corpus, "m").unwrap();
        assert!((v - 0.08 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{:.4}", v), "0.0267");
    }

    #[test]
    fn groups_partition_by_sign() {
        let corpus = corpus_with_scores(&[
            ("up", vec![0.0, 1.0, 0.0, 1.0]),
            ("down", vec![0.5, 0.5, 0.5, 0.5]),
            ("flat", vec![0.2, 0.4, 0.2, 0.4]),
        ]);
        let deltas = vec![
            RankDelta {
                model_id: "up".into(),
                rank_auc: 3,
                rank_acc: 1,
                delta: 2,
            },
            RankDelta {
                model_id: "down".into(),
                rank_auc: 1,
                rank_acc: 3,
                delta: -2,
            },
            RankDelta {
                model_id: "flat".into(),
                rank_auc: 2,
                rank_acc: 2,
                delta: 0,
            },
        ];
        let groups = group_by_delta(&deltas, &corpus).unwrap();
        assert_eq!(groups.better.models, vec!["up".to_string()]);
        assert_eq!(groups.worse.models, vec!["down".to_string()]);
        assert_eq!(groups.unchanged.models, vec!["flat".to_string()]);
        assert!((groups.better.mean_variance.unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(groups.worse.mean_variance.unwrap(), 0.0);
    }

    #[test]
    fn all_positive_deltas_fill_better_group() {
        let corpus = corpus_with_scores(&[("a", vec![0.1, 0.9]), ("b", vec![0.2, 0.8])]);
        let deltas = vec![
            RankDelta {
                model_id: "a".into(),
                rank_auc: 2,
                rank_acc: 1,
                delta: 1,
            },
            RankDelta {
                model_id: "b".into(),
                rank_auc: 3,
                rank_acc: 2,
                delta: 1,
            },
        ];
        let groups = group_by_delta(&deltas, &corpus).unwrap();
        assert_eq!(groups.better.models.len(), 2);
        assert!(groups.worse.models.is_empty());
        assert!(groups.worse.mean_variance.is_none());
    }

    #[test]
    fn histogram_degenerate_range() {
        let corpus = corpus_with_scores(&[("m", vec![0.7, 0.7, 0.7, 0.7])]);
        let h = histogram(&corpus, "m", 20).unwrap();
        assert_eq!(h.bin_count, 1);
        assert_eq!(h.counts, vec![4]);
        assert!(h.edges[0] < h.edges[1]);
    }

    #[test]
    fn histogram_two_bins() {
        let corpus = corpus_with_scores(&[("m", vec![0.0, 1.0])]);
        let h = histogram(&corpus, "m", 2).unwrap();
        assert_eq!(h.counts, vec![1, 1]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn histogram_uniform_sample_is_balanced() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let scores: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
        let corpus = corpus_with_scores(&[("m", scores)]);
        let h = histogram(&corpus, "m", 10).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 1000);
        // five-sigma binomial bound around 100 per bin
        let sigma = (1000.0_f64 * 0.1 * 0.9).sqrt();
        for &count in &h.counts {
            assert!((count as f64 - 100.0).abs() <= 5.0 * sigma, "count {count}");
        }
    }

    #[test]
    fn histogram_csv_shape() {
        let corpus = corpus_with_scores(&[("m", vec![0.0, 1.0])]);
        let csv = histogram(&corpus, "m", 2).unwrap().to_csv();
        assert_eq!(csv, "bin_start,bin_end,count\n0,0.5,1\n0.5,1,1\n");
    }

    proptest! {
        #[test]
        fn ranking_invariant_under_monotone_transform(
            values in prop::collection::vec(0.0f64..1.0, 1..12)
        ) {
            let transformed: Vec<f64> = values.iter().map(|v| (2.0 * v).exp()).collect();
            prop_assert_eq!(rank_values(&values), rank_values(&transformed));
        }

        #[test]
        fn distinct_values_rank_as_permutation(
            values in prop::collection::hash_set(0u32..1000, 1..12)
        ) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let mut ranks = rank_values(&values);
            ranks.sort_unstable();
            let expected: Vec<usize> = (1..=values.len()).collect();
            prop_assert_eq!(ranks, expected);
        }

        #[test]
        fn deltas_sum_to_zero_when_tie_free(
            values in prop::collection::hash_set(0u32..1000, 2..10)
        ) {
            let auc_means: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
            let mut acc_means = auc_means.clone();
            acc_means.reverse();
            let models: Vec<String> = (0..auc_means.len()).map(|i| format!("m{i}")).collect();
            let model_refs: Vec<&str> = models.iter().map(String::as_str).collect();
            let acc_means_aligned: Vec<f64> = acc_means;
            let a = report(&model_refs, &auc_means);
            let b = report(&model_refs, &acc_means_aligned);
            let deltas = rank_delta(&a, &b).unwrap();
            prop_assert_eq!(deltas.iter().map(|d| d.delta).sum::<i64>(), 0);
        }

        #[test]
        fn histogram_counts_sum_to_sample_size(
            scores in prop::collection::vec(-5.0f64..5.0, 1..200),
            bins in 1usize..12,
        ) {
            let corpus = corpus_with_scores(&[("m", scores.clone())]);
            let h = histogram(&corpus, "m", bins).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<u64>(), scores.len() as u64);
            for w in h.edges.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }

        #[test]
        fn variance_matches_two_pass_oracle(
            scores in prop::collection::vec(-3.0f64..3.0, 1..100)
        ) {
            let corpus = corpus_with_scores(&[("m", scores.clone())]);
            let fast = score_variance(&corpus, "m").unwrap();
            let mean: f64 = scores.iter().sum::<f64>() / scores.len() as f64;
            let oracle: f64 =
                scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / scores.len() as f64;
            prop_assert!((fast - oracle).abs() <= 1e-12);
        }
    }
}
