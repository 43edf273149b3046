//! Score/label ingestion: parse CSV or JSONL score tables plus a
//! dataset-to-domain registry into a validated, immutable corpus indexed by
//! model and dataset.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One scored item: a model's score for a dataset item plus its binary label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub model_id: String,
    pub dataset_id: String,
    pub item_id: String,
    /// Model-specific scale; any finite real. Higher means more positive.
    pub score: f64,
    /// 1 = positive.
    pub label: u8,
}

/// Input file layout for score tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for FileFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(FileFormat::Csv),
            "jsonl" => Ok(FileFormat::Jsonl),
            other => Err(format!("unknown file format `{other}`")),
        }
    }
}

/// Errors raised while loading or slicing a corpus.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed row {row} in {path}: {reason}")]
    MalformedRow {
        path: String,
        row: usize,
        reason: String,
    },
    #[error("duplicate key (model={model}, dataset={dataset}, item={item})")]
    DuplicateKey {
        model: String,
        dataset: String,
        item: String,
    },
    #[error("dataset `{0}` has no domain in the registry")]
    UnregisteredDataset(String),
    #[error("corpus contains no records")]
    EmptyCorpus,
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("models `{model_a}` and `{model_b}` cover different items of dataset `{dataset}`")]
    InconsistentItems {
        dataset: String,
        model_a: String,
        model_b: String,
    },
}

/// Mapping from dataset to domain (e.g. summarization, dialog, paraphrase).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainRegistry {
    map: HashMap<String, String>,
}

impl DomainRegistry {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        Self {
            map: entries.into_iter().collect(),
        }
    }

    /// Load from a CSV (`dataset,domain` header) or JSONL
    /// (`{"dataset": ..., "domain": ...}` lines) file, chosen by extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let is_jsonl = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json"));
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if is_jsonl {
            Self::from_jsonl(&text, &display)
        } else {
            Self::from_csv(&text, &display)
        }
    }

    fn from_csv(text: &str, path: &str) -> Result<Self, CorpusError> {
        #[derive(Deserialize)]
        struct Row {
            dataset: String,
            domain: String,
        }
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut map = HashMap::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| CorpusError::MalformedRow {
                path: path.to_string(),
                row: i + 1,
                reason: e.to_string(),
            })?;
            map.insert(row.dataset, row.domain);
        }
        Ok(Self { map })
    }

    fn from_jsonl(text: &str, path: &str) -> Result<Self, CorpusError> {
        #[derive(Deserialize)]
        struct Row {
            dataset: String,
            domain: String,
        }
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRow {
                path: path.to_string(),
                row: i + 1,
                reason: e.to_string(),
            })?;
            map.insert(row.dataset, row.domain);
        }
        Ok(Self { map })
    }

    pub fn domain_of(&self, dataset: &str) -> Option<&str> {
        self.map.get(dataset).map(String::as_str)
    }

    pub fn insert(&mut self, dataset: String, domain: String) {
        self.map.insert(dataset, domain);
    }
}

/// The registry shipped with the toolkit, covering the standard
/// multi-domain faithfulness benchmark layout. User registries override it.
pub fn default_registry() -> DomainRegistry {
    DomainRegistry::from_csv(DEFAULT_REGISTRY_CSV, "<builtin>").expect("builtin registry parses")
}

/// CSV text of [`default_registry`], suitable for writing to disk.
pub const DEFAULT_REGISTRY_CSV: &str = include_str!("../../../data/default_registry.csv");

/// (item_id, score, label) for one record inside a (model, dataset) cell.
type ItemRecord = (String, f64, u8);

#[derive(Debug, Clone, Deserialize)]
struct RawRow {
    model: String,
    dataset: String,
    item: String,
    score: f64,
    label: i64,
}

/// A validated, immutable collection of scored records with model/dataset
/// indexes in first-appearance order. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct BenchmarkCorpus {
    registry: DomainRegistry,
    models: Vec<String>,
    datasets: Vec<String>,
    /// (model index, dataset index) -> records sorted by item_id.
    cells: HashMap<(usize, usize), Vec<ItemRecord>>,
    /// Pairs where only one label class occurs.
    degenerate_pairs: HashSet<(usize, usize)>,
    record_count: usize,
}

impl BenchmarkCorpus {
    /// Load and validate a score file against a registry file.
    pub fn load(
        path: impl AsRef<Path>,
        format: FileFormat,
        registry_path: impl AsRef<Path>,
    ) -> Result<Self, CorpusError> {
        let registry = DomainRegistry::load(registry_path)?;
        Self::load_with_registry(path, format, registry)
    }

    /// Load and validate a score file against an in-memory registry.
    pub fn load_with_registry(
        path: impl AsRef<Path>,
        format: FileFormat,
        registry: DomainRegistry,
    ) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        let records = match format {
            FileFormat::Csv => parse_csv(&text, &display)?,
            FileFormat::Jsonl => parse_jsonl(&text, &display)?,
        };
        Self::from_records(records, registry)
    }

    /// Build and validate a corpus from in-memory records.
    pub fn from_records(
        records: Vec<ScoredRecord>,
        registry: DomainRegistry,
    ) -> Result<Self, CorpusError> {
        if records.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }

        let mut models: Vec<String> = Vec::new();
        let mut datasets: Vec<String> = Vec::new();
        let mut model_index: HashMap<String, usize> = HashMap::new();
        let mut dataset_index: HashMap<String, usize> = HashMap::new();
        let mut cells: HashMap<(usize, usize), Vec<ItemRecord>> = HashMap::new();
        let mut seen: HashSet<(usize, usize, String)> = HashSet::new();

        let record_count = records.len();
        for record in records {
            if registry.domain_of(&record.dataset_id).is_none() {
                return Err(CorpusError::UnregisteredDataset(record.dataset_id));
            }
            let m = *model_index
                .entry(record.model_id.clone())
                .or_insert_with(|| {
                    models.push(record.model_id.clone());
                    models.len() - 1
                });
            let d = *dataset_index
                .entry(record.dataset_id.clone())
                .or_insert_with(|| {
                    datasets.push(record.dataset_id.clone());
                    datasets.len() - 1
                });
            if !seen.insert((m, d, record.item_id.clone())) {
                return Err(CorpusError::DuplicateKey {
                    model: record.model_id,
                    dataset: record.dataset_id,
                    item: record.item_id,
                });
            }
            cells
                .entry((m, d))
                .or_default()
                .push((record.item_id, record.score, record.label));
        }

        for items in cells.values_mut() {
            items.sort_by(|a, b| a.0.cmp(&b.0));
        }

        // models covering a dataset must cover the same items
        for (d, dataset) in datasets.iter().enumerate() {
            let mut reference: Option<(usize, Vec<&String>)> = None;
            for m in 0..models.len() {
                let Some(items) = cells.get(&(m, d)) else {
                    continue;
                };
                let ids: Vec<&String> = items.iter().map(|(id, _, _)| id).collect();
                match &reference {
                    None => reference = Some((m, ids)),
                    Some((ref_m, ref_ids)) => {
                        if *ref_ids != ids {
                            return Err(CorpusError::InconsistentItems {
                                dataset: dataset.clone(),
                                model_a: models[*ref_m].clone(),
                                model_b: models[m].clone(),
                            });
                        }
                    }
                }
            }
        }

        let degenerate_pairs = cells
            .iter()
            .filter(|(_, items)| {
                let first = items[0].2;
                items.iter().all(|(_, _, label)| *label == first)
            })
            .map(|(&key, _)| key)
            .collect();

        Ok(Self {
            registry,
            models,
            datasets,
            cells,
            degenerate_pairs,
            record_count,
        })
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn registry(&self) -> &DomainRegistry {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.record_count
    }

    pub fn is_empty(&self) -> bool {
        self.record_count == 0
    }

    pub fn domain_of(&self, dataset: &str) -> Result<&str, CorpusError> {
        self.dataset_idx(dataset)?;
        self.registry
            .domain_of(dataset)
            .ok_or_else(|| CorpusError::UnregisteredDataset(dataset.to_string()))
    }

    /// Datasets sharing the given dataset's domain, in corpus order,
    /// including the dataset itself.
    pub fn same_domain_datasets(&self, dataset: &str) -> Result<Vec<String>, CorpusError> {
        let domain = self.domain_of(dataset)?;
        Ok(self
            .datasets
            .iter()
            .filter(|d| self.registry.domain_of(d) == Some(domain))
            .cloned()
            .collect())
    }

    fn model_idx(&self, model: &str) -> Result<usize, CorpusError> {
        self.models
            .iter()
            .position(|m| m == model)
            .ok_or_else(|| CorpusError::UnknownModel(model.to_string()))
    }

    fn dataset_idx(&self, dataset: &str) -> Result<usize, CorpusError> {
        self.datasets
            .iter()
            .position(|d| d == dataset)
            .ok_or_else(|| CorpusError::UnknownDataset(dataset.to_string()))
    }

    /// Whether the (model, dataset) pair exists in the corpus.
    pub fn has_pair(&self, model: &str, dataset: &str) -> bool {
        match (self.model_idx(model), self.dataset_idx(dataset)) {
            (Ok(m), Ok(d)) => self.cells.contains_key(&(m, d)),
            _ => false,
        }
    }

    /// Whether the pair's labels are single-class.
    pub fn is_degenerate_pair(&self, model: &str, dataset: &str) -> bool {
        match (self.model_idx(model), self.dataset_idx(dataset)) {
            (Ok(m), Ok(d)) => self.degenerate_pairs.contains(&(m, d)),
            _ => false,
        }
    }

    /// Parallel (scores, labels) vectors for one model over a dataset
    /// selection, ordered by corpus dataset order then item id.
    pub fn slice(
        &self,
        model: &str,
        datasets: &[String],
    ) -> Result<(Vec<f64>, Vec<u8>), CorpusError> {
        let m = self.model_idx(model)?;
        let mut selected = BTreeSet::new();
        for dataset in datasets {
            selected.insert(self.dataset_idx(dataset)?);
        }
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for d in selected {
            if let Some(items) = self.cells.get(&(m, d)) {
                for (_, score, label) in items {
                    scores.push(*score);
                    labels.push(*label);
                }
            }
        }
        Ok((scores, labels))
    }

    /// All of a model's scores pooled across its datasets, in slice order.
    pub fn model_scores(&self, model: &str) -> Result<Vec<f64>, CorpusError> {
        let (scores, _) = self.slice(model, &self.datasets.clone())?;
        Ok(scores)
    }
}

fn validate_record(
    path: &str,
    row_number: usize,
    raw: RawRow,
) -> Result<ScoredRecord, CorpusError> {
    if raw.label != 0 && raw.label != 1 {
        return Err(CorpusError::MalformedRow {
            path: path.to_string(),
            row: row_number,
            reason: format!(
                "label must be 0 or 1, got {} (model={}, dataset={}, item={})",
                raw.label, raw.model, raw.dataset, raw.item
            ),
        });
    }
    if !raw.score.is_finite() {
        return Err(CorpusError::MalformedRow {
            path: path.to_string(),
            row: row_number,
            reason: format!(
                "score must be finite, got {} (model={}, dataset={}, item={})",
                raw.score, raw.model, raw.dataset, raw.item
            ),
        });
    }
    Ok(ScoredRecord {
        model_id: raw.model,
        dataset_id: raw.dataset,
        item_id: raw.item,
        score: raw.score,
        label: raw.label as u8,
    })
}

fn parse_csv(text: &str, path: &str) -> Result<Vec<ScoredRecord>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<RawRow>().enumerate() {
        let raw = row.map_err(|e| CorpusError::MalformedRow {
            path: path.to_string(),
            row: i + 1,
            reason: e.to_string(),
        })?;
        records.push(validate_record(path, i + 1, raw)?);
    }
    Ok(records)
}

fn parse_jsonl(text: &str, path: &str) -> Result<Vec<ScoredRecord>, CorpusError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRow = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRow {
            path: path.to_string(),
            row: i + 1,
            reason: e.to_string(),
        })?;
        records.push(validate_record(path, i + 1, raw)?);
    }
    Ok(records)
}
