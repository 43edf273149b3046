//! Subcommand implementations: run the evaluation grids and emit report
//! files named `<command>_<regime>_<method>.<ext>` under the output
//! directory.

use std::path::PathBuf;

use calibench::analysis::{self, DeltaGroups, RankDelta, RankReport, RankRow};
use calibench::corpus::BenchmarkCorpus;
use calibench::fixture;
use calibench::protocols::{self, KappaBestRun, ProtocolRun, ProtocolSpec};
use serde::Serialize;

use crate::config::{CliError, FixtureArgs, RunConfig};
use crate::report::{write_report, ScoreCell, ScoreRow, ScoreTable, FALLBACK_MARKER};

fn announce(paths: &[PathBuf]) {
    for path in paths {
        println!("wrote {}", path.display());
    }
}

/// Per-dataset AUC grid with ranks and a mean row.
pub fn cmd_auc(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus = cfg.load_corpus()?;
    let run = protocols::run_protocol(&corpus, &ProtocolSpec::auc_only(cfg.seed))?;
    let table = grid_table(
        "auc_auconly_none".into(),
        "AUC evaluation (x100)".into(),
        "auc",
        &run,
        &corpus,
        cfg.meta(),
    );
    announce(&table.write(&cfg.out_dir, cfg.report_format)?);
    Ok(())
}

/// Expected-accuracy grids per (regime, method) pair plus a summary table
/// of per-model means with an AUC reference row.
pub fn cmd_calibrate(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus = cfg.load_corpus()?;
    let auc_run = protocols::run_protocol(&corpus, &ProtocolSpec::auc_only(cfg.seed))?;
    let models: Vec<String> = auc_run.means.iter().map(|m| m.model_id.clone()).collect();
    let mut summary_rows = vec![summary_row(
        "auc".into(),
        &auc_run.means.iter().map(|m| m.accuracy).collect::<Vec<_>>(),
    )];

    for &regime in &cfg.regimes {
        for &method in &cfg.methods {
            let mut spec = ProtocolSpec::new(regime, method, cfg.seed);
            spec.indata_ratio = cfg.indata_ratio;
            spec.indata_reps = cfg.indata_reps;
            let run = protocols::run_protocol(&corpus, &spec)?;

            let mut meta = cfg.meta();
            meta.push(("regime".into(), regime.to_string()));
            meta.push(("method".into(), method.to_string()));
            if regime.uses_random_splits() {
                meta.push(("reps".into(), cfg.indata_reps.to_string()));
                meta.push(("ratio".into(), cfg.indata_ratio.to_string()));
            }
            let table = grid_table(
                format!("calibrate_{}_{}", regime.name(), method.name()),
                format!("Expected accuracy evaluation (x100), {regime} / {method}"),
                "accuracy",
                &run,
                &corpus,
                meta,
            );
            announce(&table.write(&cfg.out_dir, cfg.report_format)?);

            let fallback = run.cells.iter().any(|c| c.indata_fallback);
            let label = format!(
                "{}/{}{}",
                regime.name(),
                method.name(),
                if fallback { FALLBACK_MARKER } else { "" }
            );
            summary_rows.push(summary_row(
                label,
                &run.means.iter().map(|m| m.accuracy).collect::<Vec<_>>(),
            ));
        }
    }

    let mut columns = models;
    columns.push("AVG".into());
    let summary = ScoreTable {
        name: "calibrate_summary".into(),
        title: "Mean performance over all data sets by calibration mode (x100)".into(),
        metric: "accuracy_mean".into(),
        row_header: "mode".into(),
        meta: cfg.meta(),
        columns,
        rows: summary_rows,
    };
    announce(&summary.write(&cfg.out_dir, cfg.report_format)?);
    Ok(())
}

/// Best-over-methods kappa grid per regime plus a summary of mean rows.
pub fn cmd_kappa(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus = cfg.load_corpus()?;
    let mut summary_rows = Vec::new();
    let mut models: Vec<String> = Vec::new();

    for &regime in &cfg.regimes {
        let best = protocols::kappa_best_over_methods_with(
            &corpus,
            regime,
            cfg.seed,
            cfg.indata_ratio,
            cfg.indata_reps,
        )?;
        models = best.means.iter().map(|m| m.model_id.clone()).collect();

        let mut meta = cfg.meta();
        meta.push(("regime".into(), regime.to_string()));
        meta.push(("method".into(), "best of logistic/isotonic/stump".into()));
        let table = kappa_grid_table(
            format!("kappa_{}_best", regime.name()),
            format!("Kappa evaluation (x100), {regime}, best over three calibration methods"),
            &best,
            &corpus,
            meta,
        );
        announce(&table.write(&cfg.out_dir, cfg.report_format)?);

        let fallback = best.cells.iter().any(|c| c.indata_fallback);
        let label = format!(
            "{}{}",
            regime.name(),
            if fallback { FALLBACK_MARKER } else { "" }
        );
        summary_rows.push(summary_row(
            label,
            &best.means.iter().map(|m| m.kappa).collect::<Vec<_>>(),
        ));
    }

    let mut columns = models;
    columns.push("AVG".into());
    let summary = ScoreTable {
        name: "kappa_summary".into(),
        title: "Mean kappa over all data sets, best over three calibration methods (x100)".into(),
        metric: "kappa_mean".into(),
        row_header: "mode".into(),
        meta: cfg.meta(),
        columns,
        rows: summary_rows,
    };
    announce(&summary.write(&cfg.out_dir, cfg.report_format)?);
    Ok(())
}

#[derive(Serialize)]
struct DeltaReport {
    title: String,
    meta: Vec<(String, String)>,
    deltas: Vec<RankDelta>,
}

impl DeltaReport {
    fn to_markdown(&self) -> String {
        let mut out = format!("# {}\n\n", self.title);
        for (key, value) in &self.meta {
            out.push_str(&format!("- {key}: {value}\n"));
        }
        out.push_str("\n| model | rank_auc | rank_acc | delta |\n|---|---|---|---|\n");
        for d in &self.deltas {
            out.push_str(&format!(
                "| {} | {} | {} | {:+} |\n",
                d.model_id, d.rank_auc, d.rank_acc, d.delta
            ));
        }
        out
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.meta {
            out.push_str(&format!("# {key}={value}\n"));
        }
        out.push_str("model,rank_auc,rank_acc,delta\n");
        for d in &self.deltas {
            out.push_str(&format!(
                "{},{},{},{}\n",
                d.model_id, d.rank_auc, d.rank_acc, d.delta
            ));
        }
        out
    }
}

#[derive(Serialize)]
struct ModelVariance {
    model_id: String,
    group: &'static str,
    variance: f64,
}

#[derive(Serialize)]
struct VarianceReport {
    title: String,
    meta: Vec<(String, String)>,
    models: Vec<ModelVariance>,
    groups: DeltaGroups,
}

impl VarianceReport {
    fn to_markdown(&self) -> String {
        let mut out = format!("# {}\n\n", self.title);
        for (key, value) in &self.meta {
            out.push_str(&format!("- {key}: {value}\n"));
        }
        out.push_str("\n| model | group | variance |\n|---|---|---|\n");
        for m in &self.models {
            out.push_str(&format!(
                "| {} | {} | {:.4} |\n",
                m.model_id, m.group, m.variance
            ));
        }
        out.push_str("\n| group | models | mean variance |\n|---|---|---|\n");
        for (label, group) in [
            ("better", &self.groups.better),
            ("worse", &self.groups.worse),
            ("unchanged", &self.groups.unchanged),
        ] {
            let mean = group
                .mean_variance
                .map_or("-".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!(
                "| {label} | {} | {mean} |\n",
                group.models.join(", ")
            ));
        }
        out
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.meta {
            out.push_str(&format!("# {key}={value}\n"));
        }
        out.push_str("row_type,name,group,variance\n");
        for m in &self.models {
            out.push_str(&format!(
                "model,{},{},{}\n",
                m.model_id, m.group, m.variance
            ));
        }
        for (label, group) in [
            ("better", &self.groups.better),
            ("worse", &self.groups.worse),
            ("unchanged", &self.groups.unchanged),
        ] {
            let mean = group.mean_variance.map_or(String::new(), |v| v.to_string());
            out.push_str(&format!("group,{label},,{mean}\n"));
        }
        out
    }
}

/// Rank-delta table, better/worse/unchanged variance groups, and per-model
/// score histograms for the AUC-versus-calibrated-accuracy comparison.
pub fn cmd_analyze(cfg: &RunConfig, bins: usize) -> Result<(), CliError> {
    if bins == 0 {
        return Err(CliError::Config("--bins must be at least 1".into()));
    }
    let corpus = cfg.load_corpus()?;
    let regime = cfg.regimes[0];
    let method = cfg.methods[0];

    let auc_run = protocols::run_protocol(&corpus, &ProtocolSpec::auc_only(cfg.seed))?;
    let mut spec = ProtocolSpec::new(regime, method, cfg.seed);
    spec.indata_ratio = cfg.indata_ratio;
    spec.indata_reps = cfg.indata_reps;
    let acc_run = protocols::run_protocol(&corpus, &spec)?;

    let auc_report = RankReport::from_run(&auc_run, corpus.datasets());
    let acc_report = RankReport::from_run(&acc_run, corpus.datasets());
    let deltas = analysis::rank_delta(&auc_report, &acc_report)?;
    let groups = analysis::group_by_delta(&deltas, &corpus)?;

    let mut meta = cfg.meta();
    meta.push(("accuracy_regime".into(), regime.to_string()));
    meta.push(("accuracy_method".into(), method.to_string()));

    let delta_report = DeltaReport {
        title: format!("Mean-row rank movement, AUC vs expected accuracy ({regime}/{method})"),
        meta: meta.clone(),
        deltas: deltas.clone(),
    };
    let mut json = serde_json::to_string_pretty(&delta_report).expect("serializes");
    json.push('\n');
    announce(&write_report(
        &cfg.out_dir,
        "analyze_rank_delta",
        cfg.report_format,
        || delta_report.to_markdown(),
        || delta_report.to_csv(),
        json,
    )?);

    let model_variances = deltas
        .iter()
        .map(|d| {
            Ok(ModelVariance {
                model_id: d.model_id.clone(),
                group: match d.delta.cmp(&0) {
                    std::cmp::Ordering::Greater => "better",
                    std::cmp::Ordering::Less => "worse",
                    std::cmp::Ordering::Equal => "unchanged",
                },
                variance: analysis::score_variance(&corpus, &d.model_id)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let variance_report = VarianceReport {
        title: "Score variance of models grouped by rank movement".into(),
        meta: meta.clone(),
        models: model_variances,
        groups,
    };
    let mut json = serde_json::to_string_pretty(&variance_report).expect("serializes");
    json.push('\n');
    announce(&write_report(
        &cfg.out_dir,
        "analyze_variance_groups",
        cfg.report_format,
        || variance_report.to_markdown(),
        || variance_report.to_csv(),
        json,
    )?);

    for model in corpus.models() {
        let hist = analysis::histogram(&corpus, model, bins)?;
        let name = format!("analyze_hist_{}", sanitize(model));
        let mut csv = String::new();
        for (key, value) in &meta {
            csv.push_str(&format!("# {key}={value}\n"));
        }
        csv.push_str(&hist.to_csv());
        let mut json = serde_json::to_string_pretty(&hist).expect("serializes");
        json.push('\n');
        std::fs::create_dir_all(&cfg.out_dir)?;
        let csv_path = cfg.out_dir.join(format!("{name}.csv"));
        std::fs::write(&csv_path, csv)?;
        let json_path = cfg.out_dir.join(format!("{name}.json"));
        std::fs::write(&json_path, json)?;
        announce(&[csv_path, json_path]);
    }
    Ok(())
}

/// Write the seeded synthetic corpus (and its registry) that separates AUC
/// ranking from cross-domain calibrated accuracy ranking.
pub fn cmd_fixture(args: &FixtureArgs) -> Result<(), CliError> {
    let fixture = fixture::generate(args.seed)?;
    let (corpus_path, registry_path) = fixture.write_to(&args.out)?;
    announce(&[corpus_path, registry_path]);
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn summary_row(label: String, values: &[f64]) -> ScoreRow {
    let ranks = analysis::rank_values(values);
    let avg = values.iter().sum::<f64>() / values.len() as f64;
    let mut cells: Vec<Option<ScoreCell>> = values
        .iter()
        .zip(ranks)
        .map(|(&v, rank)| Some(ScoreCell::new(v, Some(rank))))
        .collect();
    cells.push(Some(ScoreCell::new(avg, None)));
    ScoreRow { label, cells }
}

fn rows_from_report(
    report_rows: &[RankRow],
    mean: &RankRow,
    models: &[String],
    markers: impl Fn(&str, &str) -> (bool, bool),
) -> Vec<ScoreRow> {
    let mut rows: Vec<ScoreRow> = report_rows
        .iter()
        .map(|row| ScoreRow {
            label: row.label.clone(),
            cells: models
                .iter()
                .zip(row.values.iter().zip(&row.ranks))
                .map(|(model, (value, rank))| {
                    value.map(|v| {
                        let (degenerate, fallback) = markers(model, &row.label);
                        ScoreCell::new(v, *rank).with_markers(degenerate, fallback)
                    })
                })
                .collect(),
        })
        .collect();
    rows.push(ScoreRow {
        label: mean.label.clone(),
        cells: mean
            .values
            .iter()
            .zip(&mean.ranks)
            .map(|(value, rank)| value.map(|v| ScoreCell::new(v, *rank)))
            .collect(),
    });
    rows
}

fn grid_table(
    name: String,
    title: String,
    metric: &str,
    run: &ProtocolRun,
    corpus: &BenchmarkCorpus,
    meta: Vec<(String, String)>,
) -> ScoreTable {
    let report = RankReport::from_run(run, corpus.datasets());
    let rows = rows_from_report(
        &report.rows,
        &report.mean,
        &report.models,
        |model, dataset| {
            run.cells
                .iter()
                .find(|c| c.model_id == model && c.dataset_id == dataset)
                .map_or((false, false), |c| (c.degenerate, c.indata_fallback))
        },
    );
    ScoreTable {
        name,
        title,
        metric: metric.into(),
        row_header: "data set".into(),
        meta,
        columns: report.models,
        rows,
    }
}

fn kappa_grid_table(
    name: String,
    title: String,
    best: &KappaBestRun,
    corpus: &BenchmarkCorpus,
    meta: Vec<(String, String)>,
) -> ScoreTable {
    let models: Vec<String> = best.means.iter().map(|m| m.model_id.clone()).collect();
    let report_rows: Vec<RankRow> = corpus
        .datasets()
        .iter()
        .filter_map(|dataset| {
            let values: Vec<Option<f64>> = models
                .iter()
                .map(|model| {
                    best.cells
                        .iter()
                        .find(|c| &c.model_id == model && &c.dataset_id == dataset)
                        .map(|c| c.kappa)
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
        best.means.iter().map(|m| Some(m.kappa)).collect::<Vec<_>>(),
    );
    let rows = rows_from_report(&report_rows, &mean, &models, |model, dataset| {
        best.cells
            .iter()
            .find(|c| c.model_id == model && c.dataset_id == dataset)
            .map_or((false, false), |c| (c.degenerate, c.indata_fallback))
    });
    ScoreTable {
        name,
        title,
        metric: "kappa_best".into(),
        row_header: "data set".into(),
        meta,
        columns: models,
        rows,
    }
}
