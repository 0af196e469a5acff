//! Persistent caches for embeddings and summaries.
//!
//! Both caches are append-only logs loaded fully into memory on open.
//! Readers share a lock; writers serialize on the log file.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use sha2::{Digest, Sha256};

use super::SummaryResult;
use crate::embedding::EmbeddingVector;

/// SHA-256 digest used as a cache key.
pub type CacheKey = [u8; 32];

pub fn digest(parts: &[&str]) -> CacheKey {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize().into()
}

pub fn digest_hex(parts: &[&str]) -> String {
    hex::encode(digest(parts))
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt cache record in {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io {
        path: path.to_owned(),
        source,
    }
}

const EMBED_FILE: &str = "embeddings.bin";
const RECORD_MAGIC: &[u8; 4] = b"ALE1";

/// Content-hash → embedding map, persisted as a binary append log:
/// `magic | key[32] | degenerate u8 | dim u32 | dim × f64`, little-endian.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<CacheKey, Arc<EmbeddingVector>>>,
    file: Option<Mutex<(PathBuf, File)>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) the cache stored under `dir`.
    pub fn open(dir: &Path) -> Result<Self, CacheError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(EMBED_FILE);
        let mut entries = HashMap::new();
        let mut valid_len = 0u64;
        if path.exists() {
            let mut bytes = Vec::new();
            File::open(&path)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .map_err(io_err(&path))?;
            let mut pos = 0usize;
            while pos < bytes.len() {
                match decode_record(&bytes[pos..]) {
                    Some((key, vector, used)) => {
                        entries.insert(key, Arc::new(vector));
                        pos += used;
                        valid_len = pos as u64;
                    }
                    None => {
                        tracing::warn!(path = %path.display(), offset = pos, "dropping truncated embedding cache tail");
                        break;
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        if file.metadata().map_err(io_err(&path))?.len() != valid_len {
            file.set_len(valid_len).map_err(io_err(&path))?;
        }
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(Mutex::new((path, file))),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<Arc<EmbeddingVector>> {
        self.entries.read().expect("cache poisoned").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: CacheKey, vector: EmbeddingVector) -> Result<Arc<EmbeddingVector>, CacheError> {
        if let Some(existing) = self.get(&key) {
            return Ok(existing);
        }
        let vector = Arc::new(vector);
        if let Some(file) = &self.file {
            let mut guard = file.lock().expect("cache file poisoned");
            let (path, f) = &mut *guard;
            f.write_all(&encode_record(&key, &vector)).map_err(io_err(path))?;
        }
        Ok(self
            .entries
            .write()
            .expect("cache poisoned")
            .entry(key)
            .or_insert(vector)
            .clone())
    }
}

fn encode_record(key: &CacheKey, v: &EmbeddingVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(41 + 8 * v.dim());
    out.extend_from_slice(RECORD_MAGIC);
    out.extend_from_slice(key);
    out.push(u8::from(v.is_degenerate()));
    out.extend_from_slice(&(v.dim() as u32).to_le_bytes());
    for x in v.values() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn decode_record(bytes: &[u8]) -> Option<(CacheKey, EmbeddingVector, usize)> {
    if bytes.len() < 41 || &bytes[..4] != RECORD_MAGIC {
        return None;
    }
    let key: CacheKey = bytes[4..36].try_into().ok()?;
    let degenerate = bytes[36] != 0;
    let dim = u32::from_le_bytes(bytes[37..41].try_into().ok()?) as usize;
    let end = 41 + dim * 8;
    if bytes.len() < end {
        return None;
    }
    let values = bytes[41..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Some((key, EmbeddingVector::from_stored(values, degenerate), end))
}

const SUMMARY_FILE: &str = "summaries.jsonl";

#[derive(serde::Serialize, serde::Deserialize)]
struct SummaryLine {
    key: String,
    result: SummaryResult,
}

/// Request-key → summary map, persisted as JSONL.
#[derive(Debug, Default)]
pub struct SummaryCache {
    entries: RwLock<HashMap<CacheKey, Arc<SummaryResult>>>,
    file: Option<Mutex<(PathBuf, File)>>,
}

impl SummaryCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: &Path) -> Result<Self, CacheError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(SUMMARY_FILE);
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io_err(&path))?);
            for line in reader.lines() {
                let line = line.map_err(io_err(&path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let Ok(rec) = serde_json::from_str::<SummaryLine>(&line) else {
                    tracing::warn!(path = %path.display(), "skipping unreadable summary cache line");
                    continue;
                };
                let key = hex::decode(&rec.key)
                    .ok()
                    .and_then(|k| CacheKey::try_from(k.as_slice()).ok())
                    .ok_or_else(|| CacheError::Corrupt {
                        path: path.clone(),
                        message: format!("bad key `{}`", rec.key),
                    })?;
                entries.insert(key, Arc::new(rec.result));
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(Mutex::new((path, file))),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<Arc<SummaryResult>> {
        self.entries.read().expect("cache poisoned").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: CacheKey, result: SummaryResult) -> Result<Arc<SummaryResult>, CacheError> {
        if let Some(existing) = self.get(&key) {
            return Ok(existing);
        }
        if let Some(file) = &self.file {
            let mut guard = file.lock().expect("cache file poisoned");
            let (path, f) = &mut *guard;
            let line = serde_json::to_string(&SummaryLine {
                key: hex::encode(key),
                result: result.clone(),
            })
            .expect("summary serializes");
            writeln!(f, "{line}").map_err(io_err(path))?;
        }
        Ok(self
            .entries
            .write()
            .expect("cache poisoned")
            .entry(key)
            .or_insert_with(|| Arc::new(result))
            .clone())
    }
}
