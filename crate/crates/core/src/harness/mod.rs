//! End-to-end evaluation runs.
//!
//! Models are evaluated one after another; rows within a model are dispatched
//! concurrently up to the backend's in-flight limit. Verdicts are put back in
//! file order before scoring, so reports never depend on completion order.

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{DatasetEntry, RunConfig};
pub use report::{
    canonical_json, emit_report, load_report, markdown as report_markdown, metrics_csv, roc_csv, OutputFormat,
};

use crate::dataset::{load_dataset, summarize, DatasetError, DatasetSchema, DatasetStats, LabeledRecord};
use crate::gateway::{
    classify_batch, fingerprint, Backend, BackendConfigError, CacheError, RawResponse, ResponseCache,
};
use crate::label::{PartState, RowId};
use crate::metrics::{MetricError, MetricsReport};
use crate::parser::{parse_response, Verdict};
use crate::selection::{vote, VoteError, VoteTally};
use crate::serialization::{build_prompt, serialize_record, PromptTemplate, TemplateError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendConfigError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Vote(#[from] VoteError),
    #[error("malformed report {path}: {message}")]
    MalformedReport { path: PathBuf, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Where responses come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchMode {
    /// Cache first, backend on a miss.
    Live,
    /// Cache only; a miss is an error.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub entity_noun: String,
    pub positive_class: PartState,
    pub stats: DatasetStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSet {
    pub model_id: String,
    pub dataset_name: String,
    pub verdicts: Vec<Verdict>,
}

/// Wall-clock data kept out of the canonical report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_fingerprint: String,
    pub started_at: String,
    pub finished_at: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_fingerprint: String,
    pub datasets: Vec<DatasetSummary>,
    /// One entry per (model, dataset), datasets in config order, then models.
    pub reports: Vec<MetricsReport>,
    /// Datasets evaluated with fewer than two models have no tally.
    pub tallies: Vec<VoteTally>,
    pub verdicts: Vec<VerdictSet>,
    #[serde(skip)]
    pub meta: Option<RunMeta>,
}

impl RunReport {
    pub fn report_for(&self, model_id: &str, dataset_name: &str) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.model_id == model_id && r.dataset_name == dataset_name)
    }

    pub fn has_tie(&self) -> bool {
        self.tallies.iter().any(|t| t.winner.is_tie())
    }
}

/// A dataset ready for dispatch.
pub struct PreparedDataset {
    pub schema: DatasetSchema,
    pub positive_class: PartState,
    pub records: Vec<LabeledRecord>,
    pub prompts: Vec<(RowId, String)>,
}

pub fn prepare_dataset(entry: &DatasetEntry, config: &RunConfig) -> Result<PreparedDataset, HarnessError> {
    let schema = DatasetSchema::from_config_file(&entry.schema)?;
    let mut records = load_dataset(&entry.data, &schema)?;
    if let Some(limit) = config.row_limit {
        records.truncate(limit);
        if records.is_empty() {
            return Err(DatasetError::EmptyDataset.into());
        }
    }
    let template = match &config.template {
        Some(form) => PromptTemplate::custom(schema.entity_noun.clone(), form.clone())?,
        None => PromptTemplate::default_for(schema.entity_noun.clone()),
    };
    let prompts = records
        .iter()
        .map(|r| {
            let instance = serialize_record(r, schema.missing_values);
            Ok((r.row_id.clone(), build_prompt(&instance, &template)?))
        })
        .collect::<Result<Vec<_>, TemplateError>>()?;
    let positive_class = entry.positive_class.unwrap_or(schema.positive_class);
    Ok(PreparedDataset { schema, positive_class, records, prompts })
}

/// Runs the configured evaluation against backends built from the config.
pub fn run_evaluation(config: &RunConfig) -> Result<RunReport, HarnessError> {
    run_with_mode(config, DispatchMode::Live)
}

pub fn run_with_mode(config: &RunConfig, mode: DispatchMode) -> Result<RunReport, HarnessError> {
    let backends = config.backends.iter().map(|b| b.build()).collect::<Result<Vec<_>, _>>()?;
    let cache = match &config.cache_path {
        Some(path) => ResponseCache::open(path)?,
        None => ResponseCache::in_memory(),
    };
    run_with_backends(config, &backends, &cache, mode)
}

/// Runs the evaluation with caller-supplied backends, one per entry of
/// `config.backends` and in the same order.
pub fn run_with_backends(
    config: &RunConfig,
    backends: &[Arc<dyn Backend>],
    cache: &ResponseCache,
    mode: DispatchMode,
) -> Result<RunReport, HarnessError> {
    config.validate()?;
    if backends.len() != config.backends.len() {
        return Err(HarnessError::Config(format!(
            "{} backends supplied for {} configured",
            backends.len(),
            config.backends.len()
        )));
    }
    let started_at = chrono::Utc::now().to_rfc3339();

    let mut datasets = Vec::new();
    let mut reports = Vec::new();
    let mut tallies = Vec::new();
    let mut verdict_sets = Vec::new();

    for entry in &config.datasets {
        let prepared = prepare_dataset(entry, config)?;
        let name = prepared.schema.name.clone();
        log::info!("dataset {name}: {} rows", prepared.records.len());
        datasets.push(DatasetSummary {
            name: name.clone(),
            entity_noun: prepared.schema.entity_noun.clone(),
            positive_class: prepared.positive_class,
            stats: summarize(&prepared.records)?,
        });
        let labels: Vec<(RowId, PartState)> = prepared.records.iter().map(|r| (r.row_id.clone(), r.label)).collect();

        let mut dataset_reports = Vec::new();
        for (backend, backend_config) in backends.iter().zip(&config.backends) {
            let responses = match mode {
                DispatchMode::Live => {
                    let in_flight = config.max_in_flight.unwrap_or(backend_config.max_in_flight);
                    classify_batch(&prepared.prompts, backend.as_ref(), cache, in_flight)?
                }
                DispatchMode::Replay => replay_batch(&prepared.prompts, backend.model_id(), cache)?,
            };
            let verdicts: Vec<Verdict> = responses.iter().map(parse_response).collect();
            let report = MetricsReport::from_verdicts(
                backend.model_id(),
                &name,
                &verdicts,
                &labels,
                prepared.positive_class,
                config.abstention_policy,
            )?;
            log::info!(
                "{} on {name}: accuracy {}, abstention rate {:.4}",
                backend.model_id(),
                report.accuracy.map_or_else(|| "undefined".into(), |a| format!("{:.2}%", a * 100.0)),
                report.abstention_rate
            );
            dataset_reports.push(report);
            verdict_sets.push(VerdictSet {
                model_id: backend.model_id().to_string(),
                dataset_name: name.clone(),
                verdicts,
            });
        }

        if dataset_reports.len() >= 2 {
            tallies.push(vote(&dataset_reports, config.tie_break)?);
        }
        reports.extend(dataset_reports);
    }

    let config_fingerprint = config.fingerprint();
    Ok(RunReport {
        meta: Some(RunMeta {
            config_fingerprint: config_fingerprint.clone(),
            started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }),
        config_fingerprint,
        datasets,
        reports,
        tallies,
        verdicts: verdict_sets,
    })
}

fn replay_batch(
    items: &[(RowId, String)],
    model_id: &str,
    cache: &ResponseCache,
) -> Result<Vec<RawResponse>, CacheError> {
    items
        .iter()
        .map(|(row_id, prompt)| {
            let mut hit = cache
                .lookup(model_id, &fingerprint(prompt))
                .ok_or_else(|| CacheError::CacheMiss { model_id: model_id.to_string(), row_id: row_id.clone() })?;
            hit.row_id = row_id.clone();
            Ok(hit)
        })
        .collect()
}

/// Renders the first `n` prompts of every configured dataset.
pub fn preview_prompts(config: &RunConfig, n: usize) -> Result<Vec<(String, RowId, String)>, HarnessError> {
    let mut out = Vec::new();
    for entry in &config.datasets {
        let prepared = prepare_dataset(entry, config)?;
        out.extend(prepared.prompts.into_iter().take(n).map(|(id, prompt)| (prepared.schema.name.clone(), id, prompt)));
    }
    Ok(out)
}

/// Re-runs selection over the per-model reports of an existing run.
pub fn revote(report: &RunReport, tie_break: crate::selection::TieBreak) -> Result<Vec<VoteTally>, VoteError> {
    let mut by_dataset: BTreeMap<&str, Vec<MetricsReport>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in &report.reports {
        if !by_dataset.contains_key(r.dataset_name.as_str()) {
            order.push(r.dataset_name.as_str());
        }
        by_dataset.entry(r.dataset_name.as_str()).or_default().push(r.clone());
    }
    order.into_iter().filter(|d| by_dataset[d].len() >= 2).map(|d| vote(&by_dataset[d], tie_break)).collect()
}
