//! Report emission: paper-style grid tables (one "score | rank" cell per
//! model) rendered as markdown, long-format CSV, and a JSON mirror.
//!
//! Display values are multiplied by 100 and rounded to one decimal; ranks
//! are computed on the unrounded values. Every non-JSON report gets a JSON
//! mirror written next to it, and every format records the run settings in
//! its header. Nothing time-dependent is emitted, so re-running the same
//! configuration reproduces each file byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Marker appended to cells whose training fell back to in-data splits.
pub const FALLBACK_MARKER: &str = "***";
/// Marker appended to cells evaluated with a degenerate (constant) predictor.
pub const DEGENERATE_MARKER: &str = "(d)";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
            ReportFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

/// One grid cell: a raw value with its within-row rank and markers.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreCell {
    pub value: f64,
    /// `value` times 100, one decimal.
    pub display: String,
    /// Absent for unranked cells (for example a row-average column).
    pub rank: Option<usize>,
    pub degenerate: bool,
    pub fallback: bool,
}

impl ScoreCell {
    pub fn new(value: f64, rank: Option<usize>) -> Self {
        Self {
            value,
            display: format!("{:.1}", value * 100.0),
            rank,
            degenerate: false,
            fallback: false,
        }
    }

    pub fn with_markers(mut self, degenerate: bool, fallback: bool) -> Self {
        self.degenerate = degenerate;
        self.fallback = fallback;
        self
    }

    fn markdown(&self) -> String {
        let mut text = match self.rank {
            Some(rank) => format!("{} \\| **{rank}**", self.display),
            None => self.display.clone(),
        };
        if self.fallback {
            text.push_str(FALLBACK_MARKER);
        }
        if self.degenerate {
            text.push_str(DEGENERATE_MARKER);
        }
        text
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreRow {
    pub label: String,
    /// Aligned with the table's columns; `None` where a model has no data.
    pub cells: Vec<Option<ScoreCell>>,
}

/// A ranked grid: rows (datasets, or regime/method combinations) by model
/// columns, with a metric name for the long CSV form.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreTable {
    /// File stem, e.g. `calibrate_xdomain_logistic`.
    pub name: String,
    pub title: String,
    pub metric: String,
    /// Header of the row-label column: "data set" for grids, "mode" for
    /// summaries.
    pub row_header: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.title);
        out.push('\n');
        for (key, value) in &self.meta {
            let _ = writeln!(out, "- {key}: {value}");
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "| {} | {} |",
            self.row_header,
            self.columns.join(" | ")
        );
        let _ = writeln!(out, "|{}", "---|".repeat(self.columns.len() + 1));
        for row in &self.rows {
            let cells: Vec<String> = row
                .cells
                .iter()
                .map(|c| c.as_ref().map_or("-".to_string(), ScoreCell::markdown))
                .collect();
            let _ = writeln!(out, "| {} | {} |", row.label, cells.join(" | "));
        }
        out
    }

    /// Long form, one line per cell:
    /// `model,row,metric,value_x100,rank,degenerate,fallback`, preceded by
    /// `# key=value` header lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.meta {
            let _ = writeln!(out, "# {key}={value}");
        }
        let _ = writeln!(out, "model,row,metric,value_x100,rank,degenerate,fallback");
        for row in &self.rows {
            for (model, cell) in self.columns.iter().zip(&row.cells) {
                if let Some(cell) = cell {
                    let rank = cell.rank.map_or(String::new(), |r| r.to_string());
                    let _ = writeln!(
                        out,
                        "{model},{},{},{},{rank},{},{}",
                        row.label, self.metric, cell.display, cell.degenerate, cell.fallback
                    );
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("table serializes");
        text.push('\n');
        text
    }

    /// Write the table in the requested format plus a JSON mirror.
    pub fn write(&self, dir: &Path, format: ReportFormat) -> std::io::Result<Vec<PathBuf>> {
        write_report(
            dir,
            &self.name,
            format,
            || self.to_markdown(),
            || self.to_csv(),
            self.to_json(),
        )
    }
}

/// Shared writer: the chosen format, plus the JSON mirror when the chosen
/// format is not already JSON.
pub fn write_report(
    dir: &Path,
    name: &str,
    format: ReportFormat,
    markdown: impl FnOnce() -> String,
    csv: impl FnOnce() -> String,
    json: String,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let primary = dir.join(format!("{name}.{}", format.extension()));
    let body = match format {
        ReportFormat::Markdown => markdown(),
        ReportFormat::Csv => csv(),
        ReportFormat::Json => json.clone(),
    };
    std::fs::write(&primary, body)?;
    written.push(primary);
    if format != ReportFormat::Json {
        let mirror = dir.join(format!("{name}.json"));
        std::fs::write(&mirror, json)?;
        written.push(mirror);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table() -> ScoreTable {
        ScoreTable {
            name: "auc_auconly_none".into(),
            title: "AUC evaluation (x100)".into(),
            metric: "auc".into(),
            row_header: "data set".into(),
            meta: vec![("seed".into(), "7".into())],
            columns: vec!["m1".into(), "m2".into()],
            rows: vec![
                ScoreRow {
                    label: "d1".into(),
                    cells: vec![
                        Some(ScoreCell::new(0.75, Some(1))),
                        Some(ScoreCell::new(0.6004, Some(2))),
                    ],
                },
                ScoreRow {
                    label: "mean".into(),
                    cells: vec![
                        Some(ScoreCell::new(0.75, Some(1))),
                        Some(ScoreCell::new(0.6004, Some(2)).with_markers(true, false)),
                    ],
                },
            ],
        }
    }

    #[test]
    fn markdown_has_score_rank_cells() {
        let md = sample_table().to_markdown();
        assert!(md.contains("75.0 \\| **1**"));
        assert!(md.contains("60.0 \\| **2**"));
        assert!(md.contains("- seed: 7"));
        assert!(md.contains("| data set | m1 | m2 |"));
    }

    #[test]
    fn csv_long_form() {
        let csv = sample_table().to_csv();
        assert!(csv.starts_with("# seed=7\n"));
        assert!(csv.contains("model,row,metric,value_x100,rank,degenerate,fallback"));
        assert!(csv.contains("m1,d1,auc,75.0,1,false,false"));
        assert!(csv.contains("m2,mean,auc,60.0,2,true,false"));
    }

    #[test]
    fn json_mirror_written_next_to_markdown() {
        let dir = tempfile::tempdir().unwrap();
        let written = sample_table()
            .write(dir.path(), ReportFormat::Markdown)
            .unwrap();
        assert_eq!(written.len(), 2);
        assert!(written[0].ends_with("auc_auconly_none.md"));
        assert!(written[1].ends_with("auc_auconly_none.json"));
        let json = std::fs::read_to_string(&written[1]).unwrap();
        assert!(json.contains("\"rank\": 1"));
    }
}
