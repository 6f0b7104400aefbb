//! Zero-shot classification of parts and systems as available or obsolete.
//!
//! Each tabular row is serialized into a short natural-language description,
//! wrapped in a yes/no question and sent to an external LLM inference
//! endpoint. Completions are parsed into verdicts, scored against ground truth
//! and the competing models are ranked by a per-dataset metric vote.
//!
//! The pipeline stages live in their own modules:
//!
//! * [`dataset`] loads CSV exports under a declarative [`DatasetSchema`].
//! * [`serialization`] renders records and prompts.
//! * [`gateway`] dispatches prompts to backends and caches raw responses.
//! * [`parser`] turns completions into [`Verdict`]s.
//! * [`metrics`] builds confusion matrices and the derived rates.
//! * [`selection`] runs the voting rule over per-model reports.
//! * [`harness`] wires everything together and writes reports.

pub mod dataset;
pub mod gateway;
pub mod harness;
pub mod metrics;
pub mod parser;
pub mod selection;
pub mod serialization;

mod label;

pub use dataset::{load_dataset, summarize, DatasetError, DatasetSchema, DatasetStats, LabeledRecord};
pub use gateway::{
    cached_classify, classify_prompt, fingerprint, Backend, BackendConfig, BackendKind, CacheError, HttpBackend,
    RawResponse, ResponseCache, StubBackend, TransportStatus,
};
pub use harness::{emit_report, run_evaluation, OutputFormat, RunConfig, RunReport};
pub use label::{PartState, RowId};
pub use metrics::{
    accuracy, auc_single_point, build_confusion, f1, fpr, precision, recall, roc_points, AbstentionPolicy,
    ConfusionMatrix, Metric, MetricError, MetricsReport,
};
pub use parser::{parse_response, Prediction, Verdict, VerdictReason};
pub use selection::{vote, TieBreak, VoteError, VoteTally, Winner};
pub use serialization::{build_prompt, serialize_record, MissingValuePolicy, PromptTemplate, SerializedInstance};
