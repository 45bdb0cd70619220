//! Backend-agnostic chat completion and embedding interface.
//!
//! Strategies only see the [`ChatBackend`] trait. Concrete implementations:
//! deterministic offline fixtures ([`fixture::FixtureBackend`]), HTTP
//! providers ([`http`]), and a persistent response cache that wraps any of
//! them ([`cache::CachingBackend`]).

pub mod cache;
pub mod fixture;
pub mod http;
mod limiter;

pub use limiter::Semaphore;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::Label;

pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }
}

/// A completion request. Temperature defaults to 0 and max_tokens to 512.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Requests need at least one user message.
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        debug_assert!(messages.iter().any(|m| m.role == Role::User));
        ChatRequest {
            model_id: model_id.into(),
            messages,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Content of the last user message, if any.
    pub fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Digest identifying this request for caching and fixtures.
    pub fn cache_key(&self) -> CacheKey {
        let canonical = serde_json::to_string(self).expect("request serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        CacheKey(hex::encode(hasher.finalize()))
    }
}

/// Digest of (model_id, messages, temperature, max_tokens).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey(pub String);

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: TokenUsage,
}

impl ChatResponse {
    pub fn stopped(text: impl Into<String>) -> Self {
        ChatResponse {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            usage: TokenUsage::default(),
        }
    }
}

/// A fixed-size embedding with all entries finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_model: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, source_model: impl Into<String>) -> Result<Self, BackendError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::MalformedResponse(
                "embedding contains non-finite values".into(),
            ));
        }
        Ok(EmbeddingVector { values, source_model: source_model.into() })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {retries} retries")]
    RateLimited { retries: u32 },
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cache error: {0}")]
    Cache(String),
    #[error("empty input text for embedding")]
    EmptyEmbedText,
}

/// Completion + embedding provider. Shareable across threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError>;

    /// Model identifier stamped on requests built for this backend.
    fn model_id(&self) -> &str;
}

impl<T: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        (**self).embed(text)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        (**self).embed(text)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

/// Outcome of parsing a model response into a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParsedLabel {
    Label(Label),
    Unparseable,
}

impl ParsedLabel {
    pub fn label(&self) -> Option<Label> {
        match self {
            ParsedLabel::Label(l) => Some(*l),
            ParsedLabel::Unparseable => None,
        }
    }
}

/// Extracts a sarcasm label from free-form model output.
///
/// Case-insensitive scan over the response's words; the first match wins.
/// "not sarcastic" (and "non sarcastic") is checked before "sarcastic" so the
/// longer phrase takes precedence; "yes"/"no" must be whole words.
pub fn parse_label(raw: &str) -> ParsedLabel {
    let words: Vec<String> = raw
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase())
        .collect();
    for (i, word) in words.iter().enumerate() {
        let next = words.get(i + 1).map(String::as_str);
        match word.as_str() {
            "not" | "non" if next == Some("sarcastic") => {
                return ParsedLabel::Label(Label::NotSarcastic)
            }
            "sarcastic" | "yes" => return ParsedLabel::Label(Label::Sarcastic),
            "no" => return ParsedLabel::Label(Label::NotSarcastic),
            _ => {}
        }
    }
    ParsedLabel::Unparseable
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_defaults() {
        let req = ChatRequest::new("m", vec![ChatMessage::user("hi")]);
        assert_eq!(req.temperature, 0.0);
        assert_eq!(req.max_tokens, 512);
    }

    #[test]
    fn cache_key_is_deterministic_and_sensitive() {
        let a = ChatRequest::new("m", vec![ChatMessage::user("hi")]);
        let b = ChatRequest::new("m", vec![ChatMessage::user("hi")]);
        assert_eq!(a.cache_key(), b.cache_key());

        let mut c = a.clone();
        c.temperature = 0.5;
        assert_ne!(a.cache_key(), c.cache_key());

        let d = ChatRequest::new("m2", vec![ChatMessage::user("hi")]);
        assert_ne!(a.cache_key(), d.cache_key());
    }

    #[test]
    fn parse_label_exact_and_normalized() {
        assert_eq!(parse_label("Sarcastic"), ParsedLabel::Label(Label::Sarcastic));
        assert_eq!(parse_label("  no\n"), ParsedLabel::Label(Label::NotSarcastic));
        assert_eq!(
            parse_label("NOT SARCASTIC"),
            ParsedLabel::Label(Label::NotSarcastic)
        );
        assert_eq!(
            parse_label("\t not\tsarcastic "),
            ParsedLabel::Label(Label::NotSarcastic)
        );
    }

    // Hand-built corpus of realistic model outputs with hand-assigned labels.
    #[test]
    fn parse_label_realistic_corpus() {
        use Label::*;
        let corpus: [(&str, Option<Label>); 20] = [
            ("The sentence is probably 'Sarcastic'.", Some(Sarcastic)),
            ("Label: Not Sarcastic", Some(NotSarcastic)),
            ("Answer: yes", Some(Sarcastic)),
            ("answer: no.", Some(NotSarcastic)),
            ("Yes, this is sarcasm.", Some(Sarcastic)),
            ("No — the speaker is sincere.", Some(NotSarcastic)),
            ("This sentence is not sarcastic at all.", Some(NotSarcastic)),
            ("Non-sarcastic.", Some(NotSarcastic)),
            ("I would classify it as SARCASTIC because of the hyperbole.", Some(Sarcastic)),
            ("The surface sentiment does not match, so: Sarcastic", Some(Sarcastic)),
            ("Final verdict: not sarcastic\n", Some(NotSarcastic)),
            ("It's sarcastic, no doubt.", Some(Sarcastic)),
            ("I know this one: NO", Some(NotSarcastic)),
            ("\"Sarcastic\"", Some(Sarcastic)),
            ("The label is **Not Sarcastic**.", Some(NotSarcastic)),
            ("maybe", None),
            ("I cannot determine the label.", None),
            ("The sentiment is positive.", None),
            ("", None),
            ("nonsense output with nothing useful", None),
        ];
        for (raw, expected) in corpus {
            let parsed = parse_label(raw);
            match expected {
                Some(label) => assert_eq!(parsed, ParsedLabel::Label(label), "raw={raw:?}"),
                None => assert_eq!(parsed, ParsedLabel::Unparseable, "raw={raw:?}"),
            }
        }
    }

    #[test]
    fn not_sarcastic_takes_precedence_over_sarcastic() {
        // "sarcastic" appears inside the longer phrase; the longer phrase wins.
        assert_eq!(
            parse_label("not sarcastic"),
            ParsedLabel::Label(Label::NotSarcastic)
        );
        // ...but a later "not" does not flip an earlier bare "sarcastic".
        assert_eq!(
            parse_label("sarcastic, not sincere"),
            ParsedLabel::Label(Label::Sarcastic)
        );
    }

    #[test]
    fn no_requires_word_boundary() {
        assert_eq!(parse_label("I know nothing."), ParsedLabel::Unparseable);
        assert_eq!(parse_label("note: none"), ParsedLabel::Unparseable);
    }

    #[test]
    fn embedding_rejects_non_finite() {
        assert!(EmbeddingVector::new(vec![0.0, f64::NAN], "m").is_err());
        let v = EmbeddingVector::new(vec![0.0, 1.0], "m").unwrap();
        assert_eq!(v.dim(), 2);
    }
}
