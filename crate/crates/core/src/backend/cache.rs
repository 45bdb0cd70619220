//! Append-only on-disk response cache keyed by request digest.
//!
//! One JSONL log per cache directory holds both completion and embedding
//! records, so a finished run can be replayed exactly without touching the
//! upstream provider. Reads share an in-memory map; writes are serialized
//! through a single appender.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, EmbeddingVector};

const CACHE_FILE: &str = "cache.jsonl";

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum CacheRecord {
    Chat { key: String, response: ChatResponse },
    Embed { key: String, model: String, values: Vec<f64> },
}

pub struct ResponseCache {
    path: PathBuf,
    chat: RwLock<HashMap<String, ChatResponse>>,
    embed: RwLock<HashMap<String, (String, Vec<f64>)>>,
    writer: Mutex<BufWriter<File>>,
}

impl ResponseCache {
    /// Opens (creating if needed) the cache under `dir`.
    pub fn open(dir: &Path) -> Result<Self, BackendError> {
        std::fs::create_dir_all(dir).map_err(|e| BackendError::Cache(e.to_string()))?;
        let path = dir.join(CACHE_FILE);
        let mut chat = HashMap::new();
        let mut embed = HashMap::new();
        if path.exists() {
            let text =
                std::fs::read_to_string(&path).map_err(|e| BackendError::Cache(e.to_string()))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let record: CacheRecord = serde_json::from_str(line)
                    .map_err(|e| BackendError::Cache(format!("corrupt cache line: {e}")))?;
                match record {
                    CacheRecord::Chat { key, response } => {
                        chat.insert(key, response);
                    }
                    CacheRecord::Embed { key, model, values } => {
                        embed.insert(key, (model, values));
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| BackendError::Cache(e.to_string()))?;
        Ok(ResponseCache {
            path,
            chat: RwLock::new(chat),
            embed: RwLock::new(embed),
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn chat_entries(&self) -> usize {
        self.chat.read().unwrap().len()
    }

    pub fn get_chat(&self, key: &str) -> Option<ChatResponse> {
        self.chat.read().unwrap().get(key).cloned()
    }

    pub fn put_chat(&self, key: &str, response: &ChatResponse) -> Result<(), BackendError> {
        self.append(&CacheRecord::Chat { key: key.to_string(), response: response.clone() })?;
        self.chat.write().unwrap().insert(key.to_string(), response.clone());
        Ok(())
    }

    pub fn get_embed(&self, key: &str) -> Option<EmbeddingVector> {
        self.embed
            .read()
            .unwrap()
            .get(key)
            .map(|(model, values)| EmbeddingVector {
                values: values.clone(),
                source_model: model.clone(),
            })
    }

    pub fn put_embed(&self, key: &str, vector: &EmbeddingVector) -> Result<(), BackendError> {
        self.append(&CacheRecord::Embed {
            key: key.to_string(),
            model: vector.source_model.clone(),
            values: vector.values.clone(),
        })?;
        self.embed
            .write()
            .unwrap()
            .insert(key.to_string(), (vector.source_model.clone(), vector.values.clone()));
        Ok(())
    }

    fn append(&self, record: &CacheRecord) -> Result<(), BackendError> {
        let line =
            serde_json::to_string(record).map_err(|e| BackendError::Cache(e.to_string()))?;
        let mut writer = self.writer.lock().unwrap();
        writeln!(writer, "{line}").map_err(|e| BackendError::Cache(e.to_string()))?;
        writer.flush().map_err(|e| BackendError::Cache(e.to_string()))
    }
}

/// Cache key for an embedding request.
pub fn embed_key(model_id: &str, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    hasher.update(b"\x00embed\x00");
    hasher.update(text.as_bytes());
    hex::encode(hasher.finalize())
}

/// Backend wrapper that serves repeats from the cache.
pub struct CachingBackend<B> {
    inner: B,
    cache: ResponseCache,
}

impl<B: ChatBackend> CachingBackend<B> {
    pub fn new(inner: B, cache: ResponseCache) -> Self {
        CachingBackend { inner, cache }
    }

    pub fn open(inner: B, cache_dir: &Path) -> Result<Self, BackendError> {
        Ok(CachingBackend { inner, cache: ResponseCache::open(cache_dir)? })
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

impl<B: ChatBackend> ChatBackend for CachingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let key = request.cache_key();
        if let Some(hit) = self.cache.get_chat(&key.0) {
            return Ok(hit);
        }
        let response = self.inner.complete(request)?;
        self.cache.put_chat(&key.0, &response)?;
        Ok(response)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let key = embed_key(self.inner.model_id(), text);
        if let Some(hit) = self.cache.get_embed(&key) {
            return Ok(hit);
        }
        let vector = self.inner.embed(text)?;
        self.cache.put_embed(&key, &vector)?;
        Ok(vector)
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
}
