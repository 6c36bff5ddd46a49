//! Content-addressed record/replay cache.
//!
//! One JSON file per entry, named `<key>.json`, where the key is the SHA-256
//! of the backend kind, the model id and the canonical request. Entries are
//! written to a temporary file and renamed into place, so concurrent writers
//! never expose partial files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use grapheval_core::{BackendError, LanguageModel, LlmRequest, NliBackend, NliRequest, NliResponse};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Hex SHA-256 over length-prefixed `kind`, `model_id` and `request`.
pub fn cache_key(kind: &str, model_id: &str, request: &[u8]) -> String {
    let mut hasher = Sha256::new();
    for part in [kind.as_bytes(), model_id.as_bytes(), request] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub kind: String,
    pub model_id: String,
    /// The canonical request the key was computed from.
    pub request: Value,
    pub response: Value,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Serve hits from the cache; call the backend on misses and store the answer.
    Record,
    /// Serve only from the cache; a miss is an error and the backend is never called.
    Replay,
    /// Bypass the cache entirely.
    Live,
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

fn cache_err(context: &str, err: impl std::fmt::Display) -> BackendError {
    BackendError::Cache(format!("{context}: {err}"))
}

impl Cache {
    /// Opens `dir`, creating it if needed.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| cache_err(&dir.display().to_string(), e))?;
        Ok(Self { dir })
    }

    /// Opens an existing cache directory; used for replay.
    pub fn open_existing(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(cache_err(&dir.display().to_string(), "cache directory does not exist"));
        }
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, BackendError> {
        let path = self.path(key);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| cache_err(&path.display().to_string(), e)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(cache_err(&path.display().to_string(), e)),
        }
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<(), BackendError> {
        let mut bytes = serde_json::to_vec_pretty(entry).map_err(|e| cache_err("serialize", e))?;
        bytes.push(b'\n');
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| cache_err("temp file", e))?;
        tmp.write_all(&bytes).map_err(|e| cache_err("write", e))?;
        tmp.persist(self.path(&entry.key))
            .map_err(|e| cache_err("rename", e.error))?;
        Ok(())
    }

    /// All entries, ordered by key.
    pub fn entries(&self) -> Result<Vec<CacheEntry>, BackendError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(|e| cache_err("read_dir", e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let bytes = fs::read(p).map_err(|e| cache_err(&p.display().to_string(), e))?;
                serde_json::from_slice(&bytes).map_err(|e| cache_err(&p.display().to_string(), e))
            })
            .collect()
    }

    /// Looks `request` up under `kind`/`model_id`, falling back to `call`
    /// according to `mode`.
    fn through(
        cache: Option<&Cache>,
        mode: CacheMode,
        kind: &str,
        model_id: &str,
        request: Value,
        call: impl FnOnce() -> Result<Value, BackendError>,
    ) -> Result<Value, BackendError> {
        let cache = match (mode, cache) {
            (CacheMode::Live, _) | (CacheMode::Record, None) => return call(),
            (CacheMode::Replay, None) => return Err(BackendError::Cache("replay mode needs a cache".into())),
            (_, Some(cache)) => cache,
        };
        let canonical = serde_json::to_vec(&request).map_err(|e| cache_err("serialize", e))?;
        let key = cache_key(kind, model_id, &canonical);
        if let Some(entry) = cache.get(&key)? {
            return Ok(entry.response);
        }
        if mode == CacheMode::Replay {
            return Err(BackendError::ReplayMiss(key));
        }
        let response = call()?;
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        cache.put(&CacheEntry {
            key,
            kind: kind.into(),
            model_id: model_id.into(),
            request,
            response: response.clone(),
            created_at,
        })?;
        Ok(response)
    }
}

pub const LLM_KIND: &str = "llm";
pub const NLI_KIND: &str = "nli";

/// An LLM behind the cache. `params` (e.g. sampling settings) are part of
/// the key so that changing them never replays stale answers.
pub struct CachedLlm<L> {
    inner: L,
    cache: Option<Cache>,
    mode: CacheMode,
    model_id: String,
    params: Value,
}

impl<L: LanguageModel> CachedLlm<L> {
    pub fn new(inner: L, cache: Option<Cache>, mode: CacheMode, model_id: impl Into<String>, params: Value) -> Self {
        Self {
            inner,
            cache,
            mode,
            model_id: model_id.into(),
            params,
        }
    }
}

impl<L: LanguageModel> LanguageModel for CachedLlm<L> {
    fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        let canonical = json!({ "params": self.params, "request": request });
        let response = Cache::through(self.cache.as_ref(), self.mode, LLM_KIND, &self.model_id, canonical, || {
            self.inner.complete(request).map(Value::String)
        })?;
        match response {
            Value::String(s) => Ok(s),
            _ => Err(BackendError::Cache("cached LLM response is not a string".into())),
        }
    }
}

pub struct CachedNli<N> {
    inner: N,
    cache: Option<Cache>,
    mode: CacheMode,
    model_id: String,
}

impl<N: NliBackend> CachedNli<N> {
    pub fn new(inner: N, cache: Option<Cache>, mode: CacheMode, model_id: impl Into<String>) -> Self {
        Self {
            inner,
            cache,
            mode,
            model_id: model_id.into(),
        }
    }
}

impl<N: NliBackend> NliBackend for CachedNli<N> {
    fn score(&self, request: &NliRequest) -> Result<NliResponse, BackendError> {
        let canonical = serde_json::to_value(request).map_err(|e| cache_err("serialize", e))?;
        let response = Cache::through(self.cache.as_ref(), self.mode, NLI_KIND, &self.model_id, canonical, || {
            let r = self.inner.score(request)?;
            serde_json::to_value(r).map_err(|e| cache_err("serialize", e))
        })?;
        serde_json::from_value(response).map_err(|e| cache_err("cached NLI response", e))
    }
}
