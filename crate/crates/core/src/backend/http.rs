//! HTTP provider clients: OpenAI-style and Anthropic-style chat completions
//! plus an OpenAI-style embeddings endpoint.
//!
//! Transient failures (429, 5xx, network) are retried with exponential
//! backoff; a counting semaphore bounds in-flight upstream requests.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::limiter::Semaphore;
use super::{
    BackendError, ChatBackend, ChatRequest, ChatResponse, EmbeddingVector, FinishReason, Role,
    TokenUsage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderStyle {
    OpenAi,
    Anthropic,
}

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model_id: String,
    /// Model used for the embeddings endpoint, when served elsewhere.
    pub embed_model_id: Option<String>,
    /// Base URL for the OpenAI-style embeddings endpoint; defaults to `base_url`.
    pub embed_base_url: Option<String>,
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        HttpBackendConfig {
            base_url: base_url.into(),
            api_key: None,
            model_id: model_id.into(),
            embed_model_id: None,
            embed_base_url: None,
            max_retries: 3,
            base_delay_ms: 200,
            max_in_flight: 4,
            timeout_secs: 60,
        }
    }
}

pub struct HttpChatBackend {
    style: ProviderStyle,
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    limiter: Semaphore,
}

impl HttpChatBackend {
    pub fn new(style: ProviderStyle, config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let limiter = Semaphore::new(config.max_in_flight.max(1));
        Ok(HttpChatBackend { style, config, client, limiter })
    }

    fn chat_url(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        match self.style {
            ProviderStyle::OpenAi => format!("{base}/v1/chat/completions"),
            ProviderStyle::Anthropic => format!("{base}/v1/messages"),
        }
    }

    fn embed_url(&self) -> String {
        let base = self
            .config
            .embed_base_url
            .as_deref()
            .unwrap_or(&self.config.base_url)
            .trim_end_matches('/');
        format!("{base}/v1/embeddings")
    }

    fn chat_body(&self, request: &ChatRequest) -> serde_json::Value {
        match self.style {
            ProviderStyle::OpenAi => {
                let messages: Vec<_> = request
                    .messages
                    .iter()
                    .map(|m| {
                        json!({"role": role_name(m.role), "content": m.content})
                    })
                    .collect();
                json!({
                    "model": request.model_id,
                    "messages": messages,
                    "temperature": request.temperature,
                    "max_tokens": request.max_tokens,
                })
            }
            ProviderStyle::Anthropic => {
                // Anthropic takes the system prompt as a top-level field.
                let system: Vec<&str> = request
                    .messages
                    .iter()
                    .filter(|m| m.role == Role::System)
                    .map(|m| m.content.as_str())
                    .collect();
                let messages: Vec<_> = request
                    .messages
                    .iter()
                    .filter(|m| m.role != Role::System)
                    .map(|m| json!({"role": role_name(m.role), "content": m.content}))
                    .collect();
                let mut body = json!({
                    "model": request.model_id,
                    "messages": messages,
                    "temperature": request.temperature,
                    "max_tokens": request.max_tokens,
                });
                if !system.is_empty() {
                    body["system"] = json!(system.join("\n"));
                }
                body
            }
        }
    }

    fn apply_auth(&self, builder: reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
        match (&self.style, &self.config.api_key) {
            (ProviderStyle::OpenAi, Some(key)) => builder.bearer_auth(key),
            (ProviderStyle::Anthropic, Some(key)) => builder
                .header("x-api-key", key)
                .header("anthropic-version", "2023-06-01"),
            (_, None) => builder,
        }
    }

    /// POSTs with retry on 429, 5xx and transport errors.
    fn post_with_retry(
        &self,
        url: &str,
        body: &serde_json::Value,
    ) -> Result<serde_json::Value, BackendError> {
        let mut attempt = 0;
        loop {
            let outcome = {
                let _permit = self.limiter.acquire();
                self.apply_auth(self.client.post(url).json(body)).send()
            };
            match outcome {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response
                            .json::<serde_json::Value>()
                            .map_err(|e| BackendError::MalformedResponse(e.to_string()));
                    }
                    if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(BackendError::Auth(format!("status {status}")));
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    if !retryable {
                        return Err(BackendError::MalformedResponse(format!(
                            "unexpected status {status}"
                        )));
                    }
                    if attempt >= self.config.max_retries {
                        return if status.as_u16() == 429 {
                            Err(BackendError::RateLimited { retries: attempt })
                        } else {
                            Err(BackendError::Unavailable(format!("status {status}")))
                        };
                    }
                }
                Err(e) => {
                    if attempt >= self.config.max_retries {
                        return Err(BackendError::Unavailable(e.to_string()));
                    }
                }
            }
            let delay = self.config.base_delay_ms.saturating_mul(1 << attempt.min(16));
            std::thread::sleep(Duration::from_millis(delay));
            attempt += 1;
        }
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

#[derive(Deserialize)]
struct OpenAiChoice {
    message: OpenAiMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct OpenAiMessage {
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct OpenAiUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

#[derive(Deserialize)]
struct OpenAiChatResponse {
    choices: Vec<OpenAiChoice>,
    #[serde(default)]
    usage: Option<OpenAiUsage>,
}

#[derive(Deserialize)]
struct AnthropicContent {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    text: String,
}

#[derive(Deserialize, Default)]
struct AnthropicUsage {
    #[serde(default)]
    input_tokens: u32,
    #[serde(default)]
    output_tokens: u32,
}

#[derive(Deserialize)]
struct AnthropicResponse {
    content: Vec<AnthropicContent>,
    stop_reason: Option<String>,
    #[serde(default)]
    usage: Option<AnthropicUsage>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = self.chat_body(request);
        let value = self.post_with_retry(&self.chat_url(), &body)?;
        match self.style {
            ProviderStyle::OpenAi => {
                let parsed: OpenAiChatResponse = serde_json::from_value(value)
                    .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
                let choice = parsed
                    .choices
                    .into_iter()
                    .next()
                    .ok_or_else(|| BackendError::MalformedResponse("no choices".into()))?;
                let finish_reason = match choice.finish_reason.as_deref() {
                    Some("stop") | None => FinishReason::Stop,
                    Some("length") => FinishReason::Length,
                    Some(_) => FinishReason::Error,
                };
                let text = choice.message.content.unwrap_or_default();
                if text.is_empty() && finish_reason == FinishReason::Stop {
                    return Err(BackendError::MalformedResponse("empty content".into()));
                }
                let usage = parsed.usage.unwrap_or_default();
                Ok(ChatResponse {
                    text,
                    finish_reason,
                    usage: TokenUsage {
                        prompt_tokens: usage.prompt_tokens,
                        completion_tokens: usage.completion_tokens,
                    },
                })
            }
            ProviderStyle::Anthropic => {
                let parsed: AnthropicResponse = serde_json::from_value(value)
                    .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
                let text: String = parsed
                    .content
                    .iter()
                    .filter(|c| c.kind == "text")
                    .map(|c| c.text.as_str())
                    .collect();
                let finish_reason = match parsed.stop_reason.as_deref() {
                    Some("end_turn") | Some("stop_sequence") | None => FinishReason::Stop,
                    Some("max_tokens") => FinishReason::Length,
                    Some(_) => FinishReason::Error,
                };
                if text.is_empty() && finish_reason == FinishReason::Stop {
                    return Err(BackendError::MalformedResponse("empty content".into()));
                }
                let usage = parsed.usage.unwrap_or_default();
                Ok(ChatResponse {
                    text,
                    finish_reason,
                    usage: TokenUsage {
                        prompt_tokens: usage.input_tokens,
                        completion_tokens: usage.output_tokens,
                    },
                })
            }
        }
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        if text.is_empty() {
            return Err(BackendError::EmptyEmbedText);
        }
        let model = self
            .config
            .embed_model_id
            .as_deref()
            .ok_or_else(|| BackendError::Unavailable("no embedding model configured".into()))?;
        let body = json!({"model": model, "input": text});
        let value = self.post_with_retry(&self.embed_url(), &body)?;
        let parsed: EmbeddingResponse = serde_json::from_value(value)
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let datum = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::MalformedResponse("no embedding data".into()))?;
        EmbeddingVector::new(datum.embedding, model)
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }
}
