//! Run configuration: built-in defaults, optional TOML config file, CLI flag
//! overrides (flags > file > defaults), and replay from an emitted report's
//! config block.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sarcue::backend::cache::CachingBackend;
use sarcue::backend::fixture::FixtureBackend;
use sarcue::backend::http::{HttpBackendConfig, HttpChatBackend, ProviderStyle};
use sarcue::backend::ChatBackend;
use sarcue::cues::{CueCategory, CuePool};
use sarcue::data::{DataFormat, LoadOptions};
use sarcue::prompts::PromptSet;
use sarcue::toc::TocConfig;
use sarcue::types::StrategyKind;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: exit code 2, message names the offending field.
    Config(String),
    /// Failure at run time: exit code 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Fixture,
    OpenAi,
    Anthropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendProfile {
    pub provider: Provider,
    pub model_id: String,
    #[serde(default)]
    pub base_url: Option<String>,
    /// Environment variable holding the API key; never the key itself.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default)]
    pub embed_model_id: Option<String>,
    #[serde(default)]
    pub embed_base_url: Option<String>,
    /// Fixture: synthesize responses for unknown digests.
    #[serde(default)]
    pub synthesize: bool,
    /// Fixture: synthetic embedding dimension.
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Fixture: directory of recorded completions/embeddings.
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_embed_dim() -> usize {
    8
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_in_flight() -> usize {
    4
}

impl BackendProfile {
    pub fn builtin(name: &str) -> Option<BackendProfile> {
        match name {
            "fixture" => Some(BackendProfile {
                provider: Provider::Fixture,
                model_id: "fixture-model".into(),
                base_url: None,
                credential_env: None,
                embed_model_id: None,
                embed_base_url: None,
                synthesize: true,
                embed_dim: 8,
                fixture_dir: None,
                max_retries: 3,
                max_in_flight: 4,
            }),
            "fixture-strict" => Some(BackendProfile {
                synthesize: false,
                ..Self::builtin("fixture").unwrap()
            }),
            "openai" => Some(BackendProfile {
                provider: Provider::OpenAi,
                model_id: "gpt-4o".into(),
                base_url: Some("https://api.openai.com".into()),
                credential_env: Some("OPENAI_API_KEY".into()),
                embed_model_id: Some("text-embedding-3-small".into()),
                embed_base_url: None,
                synthesize: false,
                embed_dim: 8,
                fixture_dir: None,
                max_retries: 3,
                max_in_flight: 4,
            }),
            "anthropic" => Some(BackendProfile {
                provider: Provider::Anthropic,
                model_id: "claude-3-5-sonnet-20240620".into(),
                base_url: Some("https://api.anthropic.com".into()),
                credential_env: Some("ANTHROPIC_API_KEY".into()),
                embed_model_id: None,
                embed_base_url: None,
                synthesize: false,
                embed_dim: 8,
                fixture_dir: None,
                max_retries: 3,
                max_in_flight: 4,
            }),
            _ => None,
        }
    }

    /// Instantiates the backend, wrapping it in the on-disk cache when a
    /// cache directory is given.
    pub fn build(&self, cache_dir: Option<&Path>) -> Result<Box<dyn ChatBackend>, CliError> {
        let inner: Box<dyn ChatBackend> = match self.provider {
            Provider::Fixture => {
                let backend = match &self.fixture_dir {
                    Some(dir) => {
                        let loaded = FixtureBackend::load_dir(&self.model_id, dir)
                            .map_err(|e| CliError::config(format!("backend.fixture_dir: {e}")))?;
                        if self.synthesize {
                            loaded.with_synthesis(self.embed_dim)
                        } else {
                            loaded
                        }
                    }
                    None if self.synthesize => {
                        FixtureBackend::synthetic(&self.model_id, self.embed_dim)
                    }
                    None => FixtureBackend::new(&self.model_id),
                };
                Box::new(backend)
            }
            Provider::OpenAi | Provider::Anthropic => {
                let base_url = self.base_url.clone().ok_or_else(|| {
                    CliError::config("backend.base_url: required for HTTP providers")
                })?;
                let api_key = match &self.credential_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        CliError::config(format!(
                            "backend.credential_env: environment variable {var} is not set"
                        ))
                    })?),
                    None => None,
                };
                let mut config = HttpBackendConfig::new(base_url, &self.model_id);
                config.api_key = api_key;
                config.embed_model_id = self.embed_model_id.clone();
                config.embed_base_url = self.embed_base_url.clone();
                config.max_retries = self.max_retries;
                config.max_in_flight = self.max_in_flight;
                let style = match self.provider {
                    Provider::OpenAi => ProviderStyle::OpenAi,
                    Provider::Anthropic => ProviderStyle::Anthropic,
                    Provider::Fixture => unreachable!(),
                };
                Box::new(HttpChatBackend::new(style, config).map_err(anyhow::Error::from)?)
            }
        };
        match cache_dir {
            Some(dir) => Ok(Box::new(
                CachingBackend::open(inner, dir).map_err(anyhow::Error::from)?,
            )),
            None => Ok(inner),
        }
    }
}

/// The full, replayable configuration of one `run`/`ablate` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: StrategyKind,
    pub dataset: PathBuf,
    pub format: DataFormat,
    pub backend: BackendProfile,
    pub k: usize,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub max_cues: usize,
    pub start_cue: Option<String>,
    pub t: usize,
    pub q: usize,
    pub toc: TocConfig,
    pub remove: Option<CueCategory>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub parallel: bool,
    pub chart_data: bool,
    pub save_traces: bool,
    pub prompts_path: Option<PathBuf>,
    pub cues_path: Option<PathBuf>,
    #[serde(default)]
    pub dataset_options: LoadOptions,
}

/// Optional TOML config file sections.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub defaults: FileDefaults,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendProfile>,
    #[serde(default)]
    pub dataset: Option<LoadOptions>,
    #[serde(default)]
    pub prompts: Option<PathBuf>,
    #[serde(default)]
    pub cues: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileDefaults {
    pub k: Option<usize>,
    pub runs: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub threshold: Option<f64>,
    pub max_cues: Option<usize>,
    pub start_cue: Option<String>,
    pub t: Option<usize>,
    pub q: Option<usize>,
    pub parallel: Option<bool>,
    pub backend: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub toc: Option<TocConfig>,
}

/// Loaded `--config` content: either a TOML config file or the config block
/// of an emitted JSON report (replay).
pub enum ConfigSource {
    File(FileConfig),
    Replay(Box<RunConfig>),
}

pub fn load_config(path: &Path) -> Result<ConfigSource, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("--config: cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().map(|e| e == "json").unwrap_or(false);
    if is_json {
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("--config: invalid JSON: {e}")))?;
        let block = value.get("run_config").cloned().unwrap_or(value);
        let config: RunConfig = serde_json::from_value(block)
            .map_err(|e| CliError::config(format!("--config: not a run config: {e}")))?;
        Ok(ConfigSource::Replay(Box::new(config)))
    } else {
        let config: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("--config: invalid TOML: {e}")))?;
        Ok(ConfigSource::File(config))
    }
}

pub fn resolve_backend(
    name: &str,
    file: Option<&FileConfig>,
) -> Result<BackendProfile, CliError> {
    if let Some(file) = file {
        if let Some(profile) = file.backends.get(name) {
            return Ok(profile.clone());
        }
    }
    BackendProfile::builtin(name)
        .ok_or_else(|| CliError::config(format!("--backend: unknown profile {name:?}")))
}

pub fn load_prompts(path: Option<&Path>) -> Result<PromptSet, CliError> {
    match path {
        Some(p) => PromptSet::from_path(p)
            .map_err(|e| CliError::config(format!("--prompts: {e}"))),
        None => Ok(PromptSet::bundled()),
    }
}

pub fn load_cues(path: Option<&Path>) -> Result<CuePool, CliError> {
    match path {
        Some(p) => {
            CuePool::from_path(p).map_err(|e| CliError::config(format!("--cues: {e}")))
        }
        None => Ok(CuePool::standard()),
    }
}
