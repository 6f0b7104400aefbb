use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, RunReport};
use crate::metrics::{Metric, MetricsReport};
use crate::selection::{Winner, VOTING_METRICS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    Markdown,
}

/// Pretty JSON with sorted keys; floats use the shortest round-trip form.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json::Value keeps object keys in a BTreeMap, so the detour sorts them.
    let value = serde_json::to_value(value).expect("report serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

/// Reads a `report.json` written by [`emit_report`].
pub fn load_report(path: &Path) -> Result<RunReport, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::MalformedReport { path: path.to_path_buf(), message: e.to_string() })
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io { path: path.to_path_buf(), source };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.') { c } else { '_' }).collect()
}

fn cell(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the requested formats into `out_dir` and returns the files written.
///
/// `json` produces `report.json` and `meta.json`; `csv` produces
/// `metrics.csv` plus one `roc_<model>_<dataset>.csv` per report; `markdown`
/// produces `report.md`.
pub fn emit_report(report: &RunReport, formats: &[OutputFormat], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if formats.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io { path: out_dir.to_path_buf(), source })?;

    let mut written = Vec::new();
    let mut put = |name: String, contents: String| -> Result<(), HarnessError> {
        let path = out_dir.join(name);
        write_atomic(&path, &contents)?;
        written.push(path);
        Ok(())
    };

    for format in dedup(formats) {
        match format {
            OutputFormat::Json => {
                put("report.json".into(), canonical_json(report))?;
                if let Some(meta) = &report.meta {
                    put("meta.json".into(), canonical_json(meta))?;
                }
            }
            OutputFormat::Csv => {
                put("metrics.csv".into(), metrics_csv(report))?;
                for r in &report.reports {
                    let name = format!("roc_{}_{}.csv", file_safe(&r.model_id), file_safe(&r.dataset_name));
                    put(name, roc_csv(r))?;
                }
            }
            OutputFormat::Markdown => put("report.md".into(), markdown(report))?,
        }
    }
    Ok(written)
}

fn dedup(formats: &[OutputFormat]) -> Vec<OutputFormat> {
    let mut out = Vec::new();
    for f in formats {
        if !out.contains(f) {
            out.push(*f);
        }
    }
    out
}

/// `model_id,dataset,metric,value`; undefined metrics have an empty value.
pub fn metrics_csv(report: &RunReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["model_id", "dataset", "metric", "value"]).unwrap();
    for r in &report.reports {
        for metric in Metric::ALL {
            writer.write_record([&r.model_id, &r.dataset_name, metric.name(), &cell(r.get(metric))]).unwrap();
        }
        writer.write_record([&r.model_id, &r.dataset_name, "abstention_rate", &r.abstention_rate.to_string()]).unwrap();
    }
    String::from_utf8(writer.into_inner().unwrap()).unwrap()
}

pub fn roc_csv(report: &MetricsReport) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (fpr, tpr) in &report.roc_points {
        writeln!(out, "{fpr},{tpr}").unwrap();
    }
    out
}

fn shown(metric: Metric, value: Option<f64>) -> String {
    value.map(|v| metric.display(v)).unwrap_or_else(|| "---".into())
}

/// Table-style summary: dataset statistics, one metric row per
/// (model, dataset) grouped by model, and the vote outcome per dataset.
pub fn markdown(report: &RunReport) -> String {
    let mut md = String::from("# Evaluation report\n\n## Datasets\n\n");
    md.push_str("| Dataset | N | Obsolete | Available | % obsolete | Positive class |\n");
    md.push_str("|---|---|---|---|---|---|\n");
    for d in &report.datasets {
        let s = &d.stats;
        writeln!(
            md,
            "| {} | {} | {} | {} | {:.2} | {} |",
            d.name, s.n_total, s.n_obsolete, s.n_available, s.pct_obsolete, d.positive_class
        )
        .unwrap();
    }

    md.push_str("\n## Results\n\n");
    md.push_str("| Model | Dataset | Accuracy | Precision | Recall | F1 | AUC | Abstention rate |\n");
    md.push_str("|---|---|---|---|---|---|---|---|\n");
    let mut models: Vec<&str> = Vec::new();
    for r in &report.reports {
        if !models.contains(&r.model_id.as_str()) {
            models.push(&r.model_id);
        }
    }
    for model in models {
        for r in report.reports.iter().filter(|r| r.model_id == model) {
            write!(md, "| {} | {} |", r.model_id, r.dataset_name).unwrap();
            for metric in VOTING_METRICS {
                write!(md, " {} |", shown(metric, r.get(metric))).unwrap();
            }
            writeln!(md, " {:.4} |", r.abstention_rate).unwrap();
        }
    }

    if !report.tallies.is_empty() {
        md.push_str("\n## Model selection\n\n");
        for t in &report.tallies {
            let votes: Vec<String> = t.votes.iter().map(|(m, v)| format!("{m}: {v}")).collect();
            let winner = match &t.winner {
                Winner::Model(m) => format!("**{m}**"),
                Winner::Tie(ms) => format!("tie between {}", ms.join(", ")),
            };
            writeln!(md, "- {}: {} ({})", t.dataset_name, winner, votes.join(", ")).unwrap();
        }
    }
    md
}
