//! Append-only JSONL verdict cache keyed by `sha256(judge model, prompt)`.
//!
//! Readers share an `RwLock`ed map; appends are serialized through a mutex
//! around the file handle. When a key appears on several lines the last one
//! wins, so the file never needs rewriting.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub judge: String,
    pub response: String,
    pub timestamp: String,
}

/// Hex SHA-256 of the judge model and prompt, NUL-separated so that
/// `("ab", "c")` and `("a", "bc")` differ.
pub fn cache_key(model: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Default)]
pub struct VerdictCache {
    entries: RwLock<HashMap<String, String>>,
    sink: Option<(PathBuf, Mutex<File>)>,
}

impl VerdictCache {
    /// A cache that lives only as long as the process.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists and appends new entries to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| GatewayError::Cache { path: path.display().to_string(), source };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io_err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(e) => {
                        entries.insert(e.key, e.response);
                    }
                    // A torn final line from an interrupted run is harmless:
                    // the verdict is simply fetched again.
                    Err(e) => warn!(path = %path.display(), line = i + 1, "skipping bad cache line: {e}"),
                }
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err)?;
        // Terminate a torn final line so the next append starts cleanly.
        let text_len = file.metadata().map_err(io_err)?.len();
        if text_len > 0 && !std::fs::read(&path).map_err(io_err)?.ends_with(b"\n") {
            file.write_all(b"\n").map_err(io_err)?;
        }
        Ok(VerdictCache { entries: RwLock::new(entries), sink: Some((path, Mutex::new(file))) })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: &str, judge: &str, response: &str) -> Result<(), GatewayError> {
        if let Some((path, file)) = &self.sink {
            let entry = CacheEntry {
                key: key.to_string(),
                judge: judge.to_string(),
                response: response.to_string(),
                timestamp: chrono::Utc::now().to_rfc3339(),
            };
            let mut line = serde_json::to_string(&entry).expect("cache entries serialize");
            line.push('\n');
            let mut file = file.lock().unwrap();
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| GatewayError::Cache { path: path.display().to_string(), source })?;
        }
        self.entries.write().unwrap().insert(key.to_string(), response.to_string());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_separate_model_and_prompt() {
        assert_ne!(cache_key("ab", "c"), cache_key("a", "bc"));
        assert_eq!(cache_key("m", "p"), cache_key("m", "p"));
        assert_eq!(cache_key("m", "p").len(), 64);
    }

    #[test]
    fn persists_and_last_line_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/cache.jsonl");
        {
            let c = VerdictCache::open(&path).unwrap();
            c.insert("k1", "j", "first").unwrap();
            c.insert("k2", "j", "other").unwrap();
            c.insert("k1", "j", "second").unwrap();
        }
        std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"key\":").unwrap();
        let c = VerdictCache::open(&path).unwrap();
        assert_eq!(c.get("k1").as_deref(), Some("second"));
        assert_eq!(c.get("k2").as_deref(), Some("other"));
        assert_eq!(c.len(), 2);
        c.insert("k3", "j", "after torn line").unwrap();
        drop(c);
        assert_eq!(VerdictCache::open(&path).unwrap().get("k3").as_deref(), Some("after torn line"));
        let first: CacheEntry =
            serde_json::from_str(std::fs::read_to_string(&path).unwrap().lines().next().unwrap()).unwrap();
        assert_eq!((first.judge.as_str(), first.response.as_str()), ("j", "first"));
    }
}
