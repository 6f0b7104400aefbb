//! Shared fixtures and independent oracles for the integration suites.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use zsl_core::harness::DatasetEntry;
use zsl_core::{PartState, Prediction};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Writes a two-feature synthetic dataset plus its schema into `dir`.
/// Every row renders to a distinct prompt.
pub fn write_synthetic(dir: &Path, name: &str, noun: &str, labels: &[PartState], positive: PartState) -> DatasetEntry {
    let schema = dir.join(format!("{name}.toml"));
    let data = dir.join(format!("{name}.csv"));
    std::fs::write(
        &schema,
        format!(
            "name = \"{name}\"\nentity_noun = \"{noun}\"\nfeature_columns = [\"Code\", \"Series\"]\n\
             label_column = \"Status\"\npositive_class = \"{positive}\"\n\n[label_map]\nactive = \"available\"\nobsolete = \"obsolete\"\n"
        ),
    )
    .unwrap();
    let mut csv = String::from("Code,Series,Status\n");
    for (i, label) in labels.iter().enumerate() {
        let status = match label {
            PartState::Available => "active",
            PartState::Obsolete => "obsolete",
        };
        writeln!(csv, "P{i:05},S{},{status}", i % 7).unwrap();
    }
    std::fs::write(&data, csv).unwrap();
    DatasetEntry { schema, data, positive_class: None }
}

/// `n_obsolete` obsolete rows followed by `n_available` available rows,
/// interleaved deterministically so neither class forms one block.
pub fn class_labels(n_obsolete: usize, n_available: usize) -> Vec<PartState> {
    let total = n_obsolete + n_available;
    let mut out = Vec::with_capacity(total);
    let (mut o, mut a) = (0, 0);
    for i in 0..total {
        // Bresenham-style spread of obsolete rows.
        let want_obsolete = (i + 1) * n_obsolete / total;
        if o < want_obsolete || a == n_available {
            out.push(PartState::Obsolete);
            o += 1;
        } else {
            out.push(PartState::Available);
            a += 1;
        }
    }
    out
}

/// Published per-model figures: accuracy in percent, then precision,
/// recall, F1 and AUC.
#[derive(Debug, Clone, Copy)]
pub struct PublishedRow {
    pub model: &'static str,
    pub dataset: &'static str,
    pub positive: PartState,
    pub n_positive: u64,
    pub n_negative: u64,
    pub accuracy_pct: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

const ARROW_AVAILABLE: u64 = 3500;
const ARROW_OBSOLETE: u64 = 7580;
const GSM_AVAILABLE: u64 = 3855;
const GSM_OBSOLETE: u64 = 4773;

pub const PUBLISHED: [PublishedRow; 6] = [
    PublishedRow {
        model: "T0",
        dataset: "arrow",
        positive: PartState::Available,
        n_positive: ARROW_AVAILABLE,
        n_negative: ARROW_OBSOLETE,
        accuracy_pct: 72.26,
        precision: 0.803,
        recall: 0.161,
        f1: 0.269,
        auc: 0.572,
    },
    PublishedRow {
        model: "Llama 3.2",
        dataset: "arrow",
        positive: PartState::Available,
        n_positive: ARROW_AVAILABLE,
        n_negative: ARROW_OBSOLETE,
        accuracy_pct: 76.3,
        precision: 0.676,
        recall: 0.48,
        f1: 0.561,
        auc: 0.687,
    },
    PublishedRow {
        model: "Gemma 2",
        dataset: "arrow",
        positive: PartState::Available,
        n_positive: ARROW_AVAILABLE,
        n_negative: ARROW_OBSOLETE,
        accuracy_pct: 96.67,
        precision: 0.94,
        recall: 0.956,
        f1: 0.948,
        auc: 0.964,
    },
    PublishedRow {
        model: "T0",
        dataset: "gsm_arena",
        positive: PartState::Obsolete,
        n_positive: GSM_OBSOLETE,
        n_negative: GSM_AVAILABLE,
        accuracy_pct: 69.14,
        precision: 0.66,
        recall: 0.91,
        f1: 0.765,
        auc: 0.665,
    },
    PublishedRow {
        model: "Llama 3.2",
        dataset: "gsm_arena",
        positive: PartState::Obsolete,
        n_positive: GSM_OBSOLETE,
        n_negative: GSM_AVAILABLE,
        accuracy_pct: 54.08,
        precision: 0.84,
        recall: 0.21,
        f1: 0.336,
        auc: 0.58,
    },
    PublishedRow {
        model: "Gemma 2",
        dataset: "gsm_arena",
        positive: PartState::Obsolete,
        n_positive: GSM_OBSOLETE,
        n_negative: GSM_AVAILABLE,
        accuracy_pct: 55.12,
        precision: 0.552,
        recall: 0.996,
        f1: 0.711,
        auc: 0.498,
    },
];

/// Confusion counts `(tp, fp, fn, tn)` recovered by integer search.
///
/// Scans every `(tp, fp)` with `tp <= n_positive`, `fp <= n_negative`, ranks
/// them by `|precision - P| + |recall - R|` and returns the best one whose
/// accuracy lies within 0.05 percentage points of the published value.
/// Candidates with a recall or precision gap above 0.01 cannot beat a
/// sub-0.01 score and are skipped.
pub fn reconstruct_confusion(row: &PublishedRow) -> (u64, u64, u64, u64) {
    let (p_count, n_count) = (row.n_positive, row.n_negative);
    let mut candidates = Vec::new();
    for tp in 0..=p_count {
        let recall = tp as f64 / p_count as f64;
        if (recall - row.recall).abs() > 0.01 {
            continue;
        }
        for fp in 0..=n_count {
            if tp + fp == 0 {
                continue;
            }
            let precision = tp as f64 / (tp + fp) as f64;
            if (precision - row.precision).abs() > 0.01 {
                continue;
            }
            let score = (precision - row.precision).abs() + (recall - row.recall).abs();
            candidates.push((score, tp, fp));
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (_, tp, fp) = candidates
        .into_iter()
        .find(|&(_, tp, fp)| {
            let acc = 100.0 * (tp + n_count - fp) as f64 / (p_count + n_count) as f64;
            (acc - row.accuracy_pct).abs() <= 0.05
        })
        .expect("a candidate consistent with the published accuracy");
    (tp, fp, p_count - tp, n_count - fp)
}

/// Matrices produced by [`reconstruct_confusion`] for [`PUBLISHED`], frozen.
pub const RECONSTRUCTED: [(u64, u64, u64, u64); 6] = [
    (563, 138, 2937, 7442),
    (1680, 805, 1820, 6775),
    (3346, 214, 154, 7366),
    (4344, 2237, 429, 1618),
    (1002, 191, 3771, 3664),
    (4754, 3855, 19, 0),
];

/// Naive per-row metrics: `[accuracy, precision, recall, f1, fpr, auc]`,
/// `None` where a denominator vanishes (f1 is 0 when precision + recall is 0).
pub fn naive_metrics(rows: &[(Prediction, PartState)], positive: PartState) -> [Option<f64>; 6] {
    let predicted_positive = |p: &Prediction| p.state() == Some(positive);
    let scored: Vec<_> = rows.iter().filter(|(p, _)| *p != Prediction::Abstain).collect();
    let count = |f: &dyn Fn(&&(Prediction, PartState)) -> bool| scored.iter().filter(|r| f(r)).count() as f64;
    let tp = count(&|(p, a)| predicted_positive(p) && *a == positive);
    let fp = count(&|(p, a)| predicted_positive(p) && *a != positive);
    let fn_ = count(&|(p, a)| !predicted_positive(p) && *a == positive);
    let tn = count(&|(p, a)| !predicted_positive(p) && *a != positive);
    let div = |n: f64, d: f64| if d == 0.0 { None } else { Some(n / d) };

    let accuracy = div(tp + tn, scored.len() as f64);
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    let fpr = div(fp, fp + tn);
    let auc = match (recall, fpr) {
        (Some(t), Some(f)) => Some((t + 1.0 - f) / 2.0),
        _ => None,
    };
    [accuracy, precision, recall, f1, fpr, auc]
}

/// Trapezoid rule over `(0,0) -> (fpr,tpr) -> (1,1)`.
pub fn trapezoid_auc(fpr: f64, tpr: f64) -> f64 {
    let pts = [(0.0, 0.0), (fpr, tpr), (1.0, 1.0)];
    pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

/// Minimal HTTP/1.1 server answering scripted responses, one per connection.
pub mod http_stub {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;
    use std::time::Duration;

    #[derive(Clone)]
    pub struct Reply {
        pub status: u16,
        pub body: String,
        pub delay: Duration,
    }

    impl Reply {
        pub fn ok(body: &str) -> Self {
            Reply { status: 200, body: body.into(), delay: Duration::ZERO }
        }
        pub fn status(status: u16) -> Self {
            Reply { status, body: "{\"error\":\"unavailable\"}".into(), delay: Duration::ZERO }
        }
        pub fn slow(body: &str, delay: Duration) -> Self {
            Reply { status: 200, body: body.into(), delay }
        }
    }

    #[derive(Debug, Clone)]
    pub struct Captured {
        pub request_line: String,
        pub headers: Vec<(String, String)>,
        pub body: String,
    }

    pub struct Server {
        pub url: String,
        pub requests: Arc<Mutex<Vec<Captured>>>,
    }

    /// Serves `replies` in order; the last one repeats forever.
    pub fn serve(replies: Vec<Reply>) -> Server {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let Ok(mut stream) = stream else { continue };
                let reply = replies[i.min(replies.len() - 1)].clone();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                let mut headers = Vec::new();
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end().to_string();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
                        if k == "content-length" {
                            length = v.parse().unwrap();
                        }
                        headers.push((k, v));
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                log.lock().unwrap().push(Captured {
                    request_line: request_line.trim_end().to_string(),
                    headers,
                    body: String::from_utf8(body).unwrap(),
                });
                thread::sleep(reply.delay);
                let response = format!(
                    "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    reply.status,
                    reply.body.len(),
                    reply.body
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        Server { url, requests }
    }
}
