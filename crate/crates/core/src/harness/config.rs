use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, OutputFormat};
use crate::gateway::{fingerprint, BackendConfig};
use crate::label::PartState;
use crate::metrics::AbstentionPolicy;
use crate::selection::TieBreak;

/// A dataset to evaluate: its schema config and the CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub schema: PathBuf,
    pub data: PathBuf,
    /// Overrides the schema's positive class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_class: Option<PartState>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv, OutputFormat::Markdown]
}

/// Run configuration, read from TOML.
///
/// ```toml
/// output_dir = "out"
/// cache_path = "cache/responses.jsonl"
/// abstention_policy = "exclude_abstain"
///
/// [[dataset]]
/// schema = "arrow.toml"
/// data = "arrow.csv"
///
/// [[backend]]
/// model_id = "google/gemma-2-2b-it"
/// endpoint_url = "http://localhost:8000/v1/completions"
/// ```
///
/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "dataset", default)]
    pub datasets: Vec<DatasetEntry>,
    #[serde(rename = "backend", default)]
    pub backends: Vec<BackendConfig>,
    /// Custom question form; see [`crate::PromptTemplate`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default)]
    pub abstention_policy: AbstentionPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_path: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Overrides every backend's `max_in_flight`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
    /// Evaluate only the first N rows of each dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_limit: Option<usize>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl RunConfig {
    pub fn new(datasets: Vec<DatasetEntry>, backends: Vec<BackendConfig>) -> Self {
        RunConfig {
            datasets,
            backends,
            template: None,
            abstention_policy: AbstentionPolicy::default(),
            cache_path: None,
            output_dir: default_output_dir(),
            max_in_flight: None,
            row_limit: None,
            formats: default_formats(),
            tie_break: TieBreak::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Parses a config file, resolving relative paths against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            join(&mut d.schema);
            join(&mut d.data);
        }
        if let Some(cache) = &mut self.cache_path {
            join(cache);
        }
        join(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.datasets.is_empty() {
            return Err(HarnessError::Config("at least one [[dataset]] is required".into()));
        }
        if self.backends.is_empty() {
            return Err(HarnessError::Config("at least one [[backend]] is required".into()));
        }
        let mut models = HashSet::new();
        for b in &self.backends {
            b.validate()?;
            if !models.insert(b.model_id.as_str()) {
                return Err(HarnessError::Config(format!("model `{}` is configured twice", b.model_id)));
            }
        }
        if self.max_in_flight == Some(0) {
            return Err(HarnessError::Config("max_in_flight must be at least 1".into()));
        }
        if self.row_limit == Some(0) {
            return Err(HarnessError::Config("row_limit must be at least 1".into()));
        }
        Ok(())
    }

    /// Hash of the canonical JSON form of this config.
    pub fn fingerprint(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        fingerprint(&value.to_string())
    }
}
