use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{TransformError, TransformRecord};

pub const CACHE_FORMAT_VERSION: u32 = 1;

/// Append-only JSON-lines store of [`TransformRecord`]s keyed by request
/// hash. Every insert is written and flushed before returning, so an
/// interrupted run keeps all completed records.
#[derive(Debug)]
pub struct TransformCache {
    path: Option<PathBuf>,
    entries: HashMap<String, TransformRecord>,
    order: Vec<String>,
}

impl TransformCache {
    pub fn in_memory() -> Self {
        TransformCache {
            path: None,
            entries: HashMap::new(),
            order: Vec::new(),
        }
    }

    /// Loads an existing file or starts an empty one. A truncated final
    /// line (from a killed writer) is ignored with a warning; corruption
    /// anywhere else is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TransformError> {
        let path = path.as_ref().to_path_buf();
        let mut cache = TransformCache {
            path: Some(path.clone()),
            ..Self::in_memory()
        };
        if !path.exists() {
            return Ok(cache);
        }
        let lines: Vec<String> = BufReader::new(File::open(&path)?)
            .lines()
            .collect::<Result<_, _>>()?;
        let last = lines.len();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TransformRecord>(line) {
                Ok(record) => cache.remember(record),
                Err(e) if i + 1 == last => {
                    log::warn!("{}: ignoring truncated last line ({e})", path.display());
                }
                Err(e) => {
                    return Err(TransformError::Cache {
                        line: i + 1,
                        reason: e.to_string(),
                    })
                }
            }
        }
        Ok(cache)
    }

    fn remember(&mut self, record: TransformRecord) {
        if !self.entries.contains_key(&record.request_hash) {
            self.order.push(record.request_hash.clone());
        }
        self.entries.insert(record.request_hash.clone(), record);
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, request_hash: &str) -> Option<&TransformRecord> {
        self.entries.get(request_hash)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, record: TransformRecord) -> Result<(), TransformError> {
        if record.transformed.trim().is_empty() {
            return Err(TransformError::Cache {
                line: 0,
                reason: format!("refusing to cache empty text for `{}`", record.doc_id),
            });
        }
        if let Some(path) = &self.path {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        self.remember(record);
        Ok(())
    }

    /// Order-independent digest of the cached (hash, text) pairs, recorded
    /// in run manifests.
    pub fn digest(&self) -> String {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        let mut h = Sha256::new();
        h.update(CACHE_FORMAT_VERSION.to_le_bytes());
        for k in keys {
            h.update(k.as_bytes());
            h.update([0u8]);
            h.update(self.entries[k].transformed.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}
