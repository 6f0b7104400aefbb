//! Dataset schemas, CSV loading and class-balance statistics.
//!
//! A [`DatasetSchema`] is declared in a small TOML document, one per dataset:
//!
//! ```toml
//! name = "arrow"
//! entity_noun = "diode"
//! feature_columns = ["Manufacturer", "Zener Voltage"]
//! label_column = "Lifecycle"
//! positive_class = "available"
//! id_column = "Part Number"
//! missing_values = "skip"
//!
//! [label_map]
//! active = "available"
//! obsolete = "obsolete"
//! ```
//!
//! Cell values are kept as opaque text. Label cells are matched against the
//! label map case-insensitively after trimming.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{PartState, RowId};
use crate::serialization::MissingValuePolicy;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("column `{0}` is missing from the CSV header")]
    MissingColumn(String),
    #[error("row {row_id}: label value `{raw}` is not in the label map")]
    UnmappableLabel { row_id: RowId, raw: String },
    #[error("dataset has no data rows")]
    EmptyDataset,
    #[error("malformed CSV at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },
    #[error("row id `{0}` appears more than once")]
    DuplicateRowId(RowId),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("cannot parse schema config: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Declarative description of one tabular dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub name: String,
    /// Noun used in the prompt, e.g. `diode` or `phone`.
    pub entity_noun: String,
    pub feature_columns: Vec<String>,
    pub label_column: String,
    /// Raw label cell (normalized to trimmed lowercase) to state.
    pub label_map: BTreeMap<String, PartState>,
    pub positive_class: PartState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    #[serde(default)]
    pub missing_values: MissingValuePolicy,
}

fn normalize_label(raw: &str) -> String {
    raw.trim().to_lowercase()
}

impl DatasetSchema {
    /// Normalizes label-map keys and checks the schema invariants.
    pub fn validated(mut self) -> Result<Self, DatasetError> {
        let invalid = |msg: String| Err(DatasetError::InvalidSchema(msg));
        if self.name.trim().is_empty() {
            return invalid("name is empty".into());
        }
        if self.entity_noun.trim().is_empty() {
            return invalid("entity_noun is empty".into());
        }
        if self.feature_columns.is_empty() {
            return invalid("feature_columns is empty".into());
        }
        let mut seen = HashSet::new();
        for col in &self.feature_columns {
            if !seen.insert(col.as_str()) {
                return invalid(format!("feature column `{col}` is listed twice"));
            }
        }
        if seen.contains(self.label_column.as_str()) {
            return invalid(format!("label column `{}` is also a feature column", self.label_column));
        }

        let mut normalized = BTreeMap::new();
        for (raw, state) in std::mem::take(&mut self.label_map) {
            let key = normalize_label(&raw);
            if key.is_empty() {
                return invalid("label_map contains an empty key".into());
            }
            if let Some(prev) = normalized.insert(key.clone(), state) {
                if prev != state {
                    return invalid(format!("label `{key}` maps to both states"));
                }
            }
        }
        let states: HashSet<_> = normalized.values().copied().collect();
        if normalized.len() < 2 || states.len() < 2 {
            return invalid("label_map must map at least one raw value onto each state".into());
        }
        self.label_map = normalized;
        Ok(self)
    }

    pub fn from_config_str(text: &str) -> Result<Self, DatasetError> {
        let schema: DatasetSchema = toml::from_str(text).map_err(|e| DatasetError::Config(e.to_string()))?;
        schema.validated()
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
        Self::from_config_str(&text)
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("schema is always representable as TOML")
    }

    /// Maps a raw label cell onto a state, if the label map knows it.
    pub fn map_label(&self, raw: &str) -> Option<PartState> {
        self.label_map.get(&normalize_label(raw)).copied()
    }
}

/// One data row: ordered features plus the ground-truth label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub row_id: RowId,
    pub features: Vec<(String, String)>,
    pub label: PartState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_total: usize,
    pub n_obsolete: usize,
    pub n_available: usize,
    /// Share of obsolete rows in percent, rounded half-up to 2 decimals.
    pub pct_obsolete: f64,
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Vec<LabeledRecord>, DatasetError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    load_dataset_from_reader(file, schema)
}

/// Same as [`load_dataset`] over any byte source.
pub fn load_dataset_from_reader<R: Read>(
    reader: R,
    schema: &DatasetSchema,
) -> Result<Vec<LabeledRecord>, DatasetError> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);

    let headers = csv_reader.headers().map_err(malformed)?.clone();
    let column_index = |name: &str| -> Result<usize, DatasetError> {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let feature_idx = schema.feature_columns.iter().map(|c| column_index(c)).collect::<Result<Vec<_>, _>>()?;
    let label_idx = column_index(&schema.label_column)?;
    let id_idx = schema.id_column.as_deref().map(column_index).transpose()?;

    let mut records = Vec::new();
    let mut seen_ids = HashSet::new();
    for (position, row) in csv_reader.records().enumerate() {
        let row = row.map_err(malformed)?;
        let cell = |i: usize| row.get(i).unwrap_or("").trim();

        let row_id = match id_idx {
            Some(i) => RowId(cell(i).to_string()),
            None => RowId::from(position),
        };
        if !seen_ids.insert(row_id.clone()) {
            return Err(DatasetError::DuplicateRowId(row_id));
        }

        let raw_label = cell(label_idx);
        let label = schema
            .map_label(raw_label)
            .ok_or_else(|| DatasetError::UnmappableLabel { row_id: row_id.clone(), raw: raw_label.to_string() })?;

        let features = schema
            .feature_columns
            .iter()
            .zip(&feature_idx)
            .map(|(name, &i)| (name.clone(), cell(i).to_string()))
            .collect();

        records.push(LabeledRecord { row_id, features, label });
    }

    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(records)
}

fn malformed(err: csv::Error) -> DatasetError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    DatasetError::MalformedCsv { line, message: err.to_string() }
}

pub fn summarize(records: &[LabeledRecord]) -> Result<DatasetStats, DatasetError> {
    summarize_labels(records.iter().map(|r| r.label))
}

pub fn summarize_labels(labels: impl IntoIterator<Item = PartState>) -> Result<DatasetStats, DatasetError> {
    let (mut n_obsolete, mut n_available) = (0usize, 0usize);
    for label in labels {
        match label {
            PartState::Obsolete => n_obsolete += 1,
            PartState::Available => n_available += 1,
        }
    }
    let n_total = n_obsolete + n_available;
    if n_total == 0 {
        return Err(DatasetError::EmptyDataset);
    }
    // Half-up rounding to hundredths of a percent, in integers.
    let hundredths = (2 * 10_000 * n_obsolete as u128 + n_total as u128) / (2 * n_total as u128);
    Ok(DatasetStats { n_total, n_obsolete, n_available, pct_obsolete: hundredths as f64 / 100.0 })
}
