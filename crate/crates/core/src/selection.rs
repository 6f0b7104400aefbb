//! Per-dataset model selection by metric voting.
//!
//! Each of accuracy, precision, recall, F1 and AUC casts one vote for the
//! model(s) attaining its maximum. The model with the most votes wins; equal
//! vote counts are reported as a tie unless a tie-break is requested.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Metric, MetricsReport};

/// Metrics that take part in the vote. FPR and abstention rate do not.
pub const VOTING_METRICS: [Metric; 5] = [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1, Metric::Auc];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VoteError {
    #[error("voting needs at least 2 reports, got {0}")]
    TooFewReports(usize),
    #[error("reports span several datasets: `{0}` and `{1}`")]
    MixedDatasets(String, String),
    #[error("model `{0}` has more than one report")]
    DuplicateModel(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Report ties as ties.
    #[default]
    Surface,
    /// Pick the lexicographically smallest model id among the tied.
    Lexicographic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Model(String),
    Tie(Vec<String>),
}

impl Winner {
    pub fn is_tie(&self) -> bool {
        matches!(self, Winner::Tie(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub dataset_name: String,
    /// Votes per model; every input model appears, possibly with 0.
    pub votes: BTreeMap<String, usize>,
    /// Models holding each metric's maximum (empty when no report defines it).
    pub metric_winners: BTreeMap<Metric, Vec<String>>,
    pub winner: Winner,
}

pub fn vote(reports: &[MetricsReport], tie_break: TieBreak) -> Result<VoteTally, VoteError> {
    if reports.len() < 2 {
        return Err(VoteError::TooFewReports(reports.len()));
    }
    let dataset = &reports[0].dataset_name;
    if let Some(other) = reports.iter().find(|r| &r.dataset_name != dataset) {
        return Err(VoteError::MixedDatasets(dataset.clone(), other.dataset_name.clone()));
    }

    let mut votes = BTreeMap::new();
    for r in reports {
        if votes.insert(r.model_id.clone(), 0usize).is_some() {
            return Err(VoteError::DuplicateModel(r.model_id.clone()));
        }
    }

    let mut metric_winners = BTreeMap::new();
    for metric in VOTING_METRICS {
        let best = reports
            .iter()
            .filter_map(|r| r.get(metric))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        let mut holders: Vec<String> = match best {
            Some(best) => reports.iter().filter(|r| r.get(metric) == Some(best)).map(|r| r.model_id.clone()).collect(),
            None => Vec::new(),
        };
        holders.sort();
        for model in &holders {
            *votes.get_mut(model).expect("holder is an input model") += 1;
        }
        metric_winners.insert(metric, holders);
    }

    let top = votes.values().copied().max().unwrap_or(0);
    let leaders: Vec<String> = votes.iter().filter(|(_, &v)| v == top).map(|(m, _)| m.clone()).collect();
    let winner = match (leaders.len(), tie_break) {
        (1, _) | (_, TieBreak::Lexicographic) => Winner::Model(leaders[0].clone()),
        _ => Winner::Tie(leaders),
    };

    Ok(VoteTally { dataset_name: dataset.clone(), votes, metric_winners, winner })
}
