//! Deterministic offline backend for tests and reproducible runs.
//!
//! Responses are resolved in order from: a scripted queue (tests), an exact
//! digest store (hand-authored or recorded), substring rules (tests), and an
//! optional synthesizer that derives a plausible response from the request
//! digest. With synthesis off, an unknown digest is a hard miss.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    BackendError, CacheKey, ChatBackend, ChatRequest, ChatResponse, EmbeddingVector,
};

#[derive(Debug, Clone)]
struct FixtureRule {
    needles: Vec<String>,
    response: String,
}

#[derive(Debug, Clone, Copy)]
struct SynthSettings {
    embed_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct CompletionRecord {
    digest: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    text: String,
    values: Vec<f64>,
}

#[derive(Debug)]
pub struct FixtureBackend {
    model_id: String,
    completions: RwLock<HashMap<String, String>>,
    rules: RwLock<Vec<FixtureRule>>,
    script: Mutex<VecDeque<String>>,
    embeddings: RwLock<HashMap<String, Vec<f64>>>,
    embed_dim: Mutex<Option<usize>>,
    synth: Option<SynthSettings>,
    chat_calls: AtomicUsize,
    embed_calls: AtomicUsize,
}

impl FixtureBackend {
    /// Strict fixture: only stored digests, rules and scripts answer.
    pub fn new(model_id: impl Into<String>) -> Self {
        FixtureBackend {
            model_id: model_id.into(),
            completions: RwLock::new(HashMap::new()),
            rules: RwLock::new(Vec::new()),
            script: Mutex::new(VecDeque::new()),
            embeddings: RwLock::new(HashMap::new()),
            embed_dim: Mutex::new(None),
            synth: None,
            chat_calls: AtomicUsize::new(0),
            embed_calls: AtomicUsize::new(0),
        }
    }

    /// Fixture that synthesizes deterministic responses and embeddings for
    /// any request it has no explicit record for.
    pub fn synthetic(model_id: impl Into<String>, embed_dim: usize) -> Self {
        let mut backend = Self::new(model_id);
        backend.synth = Some(SynthSettings { embed_dim });
        backend
    }

    /// Loads `completions.jsonl` and `embeddings.jsonl` from a directory.
    /// Either file may be absent. Embedding dimensions must be consistent.
    pub fn load_dir(model_id: impl Into<String>, dir: &Path) -> Result<Self, BackendError> {
        let backend = Self::new(model_id);
        let completions_path = dir.join("completions.jsonl");
        if completions_path.exists() {
            let text = std::fs::read_to_string(&completions_path)
                .map_err(|e| BackendError::Unavailable(format!("fixture read: {e}")))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let record: CompletionRecord = serde_json::from_str(line)
                    .map_err(|e| BackendError::MalformedResponse(format!("fixture record: {e}")))?;
                backend.completions.write().unwrap().insert(record.digest, record.text);
            }
        }
        let embeddings_path = dir.join("embeddings.jsonl");
        if embeddings_path.exists() {
            let text = std::fs::read_to_string(&embeddings_path)
                .map_err(|e| BackendError::Unavailable(format!("fixture read: {e}")))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let record: EmbeddingRecord = serde_json::from_str(line)
                    .map_err(|e| BackendError::MalformedResponse(format!("fixture record: {e}")))?;
                backend.insert_embedding(&record.text, record.values)?;
            }
        }
        Ok(backend)
    }

    pub fn with_synthesis(mut self, embed_dim: usize) -> Self {
        self.synth = Some(SynthSettings { embed_dim });
        self
    }

    pub fn insert_completion(&self, digest: CacheKey, text: impl Into<String>) {
        self.completions.write().unwrap().insert(digest.0, text.into());
    }

    /// Registers a response for the exact request.
    pub fn insert_response_for(&self, request: &ChatRequest, text: impl Into<String>) {
        self.insert_completion(request.cache_key(), text);
    }

    /// Registers a response for any request whose last user message contains
    /// every needle.
    pub fn add_rule(&self, needles: &[&str], response: impl Into<String>) {
        self.rules.write().unwrap().push(FixtureRule {
            needles: needles.iter().map(|s| s.to_string()).collect(),
            response: response.into(),
        });
    }

    /// Queues responses returned in order regardless of the request.
    pub fn push_script<I, S>(&self, responses: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut script = self.script.lock().unwrap();
        for r in responses {
            script.push_back(r.into());
        }
    }

    pub fn insert_embedding(&self, text: &str, values: Vec<f64>) -> Result<(), BackendError> {
        let mut dim = self.embed_dim.lock().unwrap();
        match *dim {
            Some(expected) if expected != values.len() => {
                return Err(BackendError::DimensionMismatch { expected, got: values.len() })
            }
            None => *dim = Some(values.len()),
            _ => {}
        }
        self.embeddings.write().unwrap().insert(text.to_string(), values);
        Ok(())
    }

    /// Upstream completion calls served so far.
    pub fn chat_calls(&self) -> usize {
        self.chat_calls.load(Ordering::SeqCst)
    }

    pub fn embed_calls(&self) -> usize {
        self.embed_calls.load(Ordering::SeqCst)
    }

    fn synthesize(&self, request: &ChatRequest) -> String {
        let seed = digest_seed(&request.cache_key().0);
        let prompt = request.last_user_content().unwrap_or("");
        if prompt.contains("vote the most valuable") {
            let confidence = 50 + seed % 50;
            if confidence >= 95 {
                let label = if seed % 2 == 0 { "Sarcastic" } else { "Not Sarcastic" };
                format!("Confidence: {confidence}%. Result: {label}.")
            } else {
                match pick_remaining_cue(prompt, seed) {
                    Some(cue) => format!(
                        "Confidence: {confidence}%. The most valuable next cue: {cue}."
                    ),
                    None => format!("Confidence: {confidence}%."),
                }
            }
        } else if prompt.contains("Return the label only")
            || prompt.contains("Answer with exactly one word")
        {
            if seed % 2 == 0 { "Sarcastic".into() } else { "Not Sarcastic".into() }
        } else if prompt.contains("Extract the") {
            format!("cue evidence {:016x}", seed)
        } else {
            format!("observation {:016x}", seed)
        }
    }

    fn synth_embedding(&self, text: &str, dim: usize) -> Vec<f64> {
        let mut values = Vec::with_capacity(dim);
        let mut counter: u32 = 0;
        'outer: loop {
            let mut hasher = Sha256::new();
            hasher.update(self.model_id.as_bytes());
            hasher.update([0u8]);
            hasher.update(text.as_bytes());
            hasher.update(counter.to_le_bytes());
            let block = hasher.finalize();
            for chunk in block.chunks_exact(8) {
                let raw = u64::from_le_bytes(chunk.try_into().unwrap());
                values.push((raw as f64 / u64::MAX as f64) * 2.0 - 1.0);
                if values.len() == dim {
                    break 'outer;
                }
            }
            counter += 1;
        }
        values
    }
}

/// First eight bytes of the hex digest as a u64.
fn digest_seed(digest_hex: &str) -> u64 {
    let bytes = hex::decode(&digest_hex[..16.min(digest_hex.len())]).unwrap_or_default();
    let mut raw = [0u8; 8];
    for (i, b) in bytes.iter().take(8).enumerate() {
        raw[i] = *b;
    }
    u64::from_le_bytes(raw)
}

/// Reads the cue ids enumerated as "remaining cues {a, b, c}" in the prompt
/// and picks one deterministically.
fn pick_remaining_cue(prompt: &str, seed: u64) -> Option<String> {
    let start = prompt.find("remaining cues {")? + "remaining cues {".len();
    let end = prompt[start..].find('}')? + start;
    let ids: Vec<&str> = prompt[start..end]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if ids.is_empty() {
        return None;
    }
    Some(ids[(seed % ids.len() as u64) as usize].to_string())
}

impl ChatBackend for FixtureBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.chat_calls.fetch_add(1, Ordering::SeqCst);
        if let Some(text) = self.script.lock().unwrap().pop_front() {
            return Ok(ChatResponse::stopped(text));
        }
        let digest = request.cache_key();
        if let Some(text) = self.completions.read().unwrap().get(&digest.0) {
            return Ok(ChatResponse::stopped(text.clone()));
        }
        if let Some(content) = request.last_user_content() {
            let rules = self.rules.read().unwrap();
            if let Some(rule) = rules
                .iter()
                .find(|r| r.needles.iter().all(|n| content.contains(n.as_str())))
            {
                return Ok(ChatResponse::stopped(rule.response.clone()));
            }
        }
        if self.synth.is_some() {
            return Ok(ChatResponse::stopped(self.synthesize(request)));
        }
        Err(BackendError::Unavailable(format!("no fixture for digest {digest}")))
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        if text.is_empty() {
            return Err(BackendError::EmptyEmbedText);
        }
        self.embed_calls.fetch_add(1, Ordering::SeqCst);
        if let Some(values) = self.embeddings.read().unwrap().get(text) {
            return EmbeddingVector::new(values.clone(), self.model_id.clone());
        }
        if let Some(synth) = self.synth {
            let values = self.synth_embedding(text, synth.embed_dim);
            return EmbeddingVector::new(values, self.model_id.clone());
        }
        Err(BackendError::Unavailable(format!("no fixture embedding for text {text:?}")))
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}
