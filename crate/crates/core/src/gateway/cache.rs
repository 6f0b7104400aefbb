use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{RawResponse, TransportStatus};
use crate::label::RowId;

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache {path} is corrupt at line {line}: {message}")]
    CacheCorrupt { path: PathBuf, line: usize, message: String },
    #[error("cache I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no cached response for model `{model_id}`, row {row_id}")]
    CacheMiss { model_id: String, row_id: RowId },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheLine {
    v: u32,
    row_id: RowId,
    model_id: String,
    prompt_fingerprint: String,
    completion_text: String,
    transport_status: TransportStatus,
}

type Key = (String, String);

/// Append-only JSON-lines store of successful responses keyed by
/// `(model_id, prompt_fingerprint)`.
///
/// Reads are concurrent; appends go through a single writer.
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<Key, RawResponse>>,
    writer: Mutex<Option<File>>,
}

impl ResponseCache {
    /// Opens (creating if needed) a cache file and loads every entry.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| CacheError::Io { path: path.clone(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }

        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let corrupt = |message: String| CacheError::CacheCorrupt { path: path.clone(), line: i + 1, message };
                let entry: CacheLine = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                if entry.v != SCHEMA_VERSION {
                    return Err(corrupt(format!("unsupported schema version {}", entry.v)));
                }
                let response = RawResponse {
                    row_id: entry.row_id,
                    model_id: entry.model_id,
                    prompt_fingerprint: entry.prompt_fingerprint,
                    completion_text: entry.completion_text,
                    transport_status: entry.transport_status,
                };
                entries.insert((response.model_id.clone(), response.prompt_fingerprint.clone()), response);
            }
        }

        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(ResponseCache { path: Some(path), entries: RwLock::new(entries), writer: Mutex::new(Some(file)) })
    }

    /// A cache that lives only for the current process.
    pub fn in_memory() -> Self {
        ResponseCache { path: None, entries: RwLock::default(), writer: Mutex::new(None) }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, model_id: &str, prompt_fingerprint: &str) -> Option<RawResponse> {
        self.entries.read().unwrap().get(&(model_id.to_string(), prompt_fingerprint.to_string())).cloned()
    }

    /// Records an ok response; other statuses are ignored.
    pub fn append(&self, response: &RawResponse) -> Result<(), CacheError> {
        if !response.transport_status.is_ok() {
            return Ok(());
        }
        let line = serde_json::to_string(&CacheLine {
            v: SCHEMA_VERSION,
            row_id: response.row_id.clone(),
            model_id: response.model_id.clone(),
            prompt_fingerprint: response.prompt_fingerprint.clone(),
            completion_text: response.completion_text.clone(),
            transport_status: response.transport_status,
        })
        .expect("cache line serializes");

        let mut writer = self.writer.lock().unwrap();
        if let Some(file) = writer.as_mut() {
            let path = self.path.clone().unwrap_or_default();
            file.write_all(format!("{line}\n").as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| CacheError::Io { path, source })?;
        }
        self.entries
            .write()
            .unwrap()
            .insert((response.model_id.clone(), response.prompt_fingerprint.clone()), response.clone());
        Ok(())
    }
}
