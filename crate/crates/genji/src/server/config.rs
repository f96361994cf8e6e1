//! Server configuration from TOML with environment overrides.

use std::path::{Path, PathBuf};

use genji_core::classifier::VoteMode;
use genji_core::dialogue::PromptConfig;
use serde::{Deserialize, Serialize};

use crate::stream::Speedup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    #[default]
    Stub,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub mode: LlmMode,
    pub endpoint: Option<String>,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_s: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            mode: LlmMode::Stub,
            endpoint: None,
            model: crate::llm::DEFAULT_MODEL.into(),
            api_key: None,
            timeout_s: 20,
        }
    }
}

/// Live inference while a round is being smelled. Frames come from a
/// synthetic recording of the round's class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensingConfig {
    pub enabled: bool,
    /// Playback speed; `inf` delivers frames immediately.
    pub speedup: f64,
    pub duration_s: u32,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            speedup: 1.0,
            duration_s: 150,
            noise_sigma: genji_core::sensor::DEFAULT_NOISE_SIGMA,
            seed: 0,
        }
    }
}

impl SensingConfig {
    pub fn speedup(&self) -> Result<Speedup, ConfigError> {
        Speedup::new(self.speedup).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Base of the join links handed out with tokens.
    pub public_url: String,
    pub model_path: Option<PathBuf>,
    pub persona_path: Option<PathBuf>,
    pub knowledge_dir: Option<PathBuf>,
    pub sequences_path: Option<PathBuf>,
    pub vote_mode: VoteMode,
    pub prompt: PromptConfig,
    pub llm: LlmConfig,
    pub sensing: SensingConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("genji-data"),
            public_url: "http://localhost:8080".into(),
            model_path: None,
            persona_path: None,
            knowledge_dir: None,
            sequences_path: None,
            vote_mode: VoteMode::Count,
            prompt: PromptConfig::default(),
            llm: LlmConfig::default(),
            sensing: SensingConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("environment variable {name}: {reason}")]
    Env { name: &'static str, reason: String },
    #[error("{0}")]
    Invalid(String),
}

impl ServerConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Toml { path: origin.into(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&text, path)
    }

    /// Applies `PORT`, `DATA_DIR`, `MODEL_PATH`, `LLM_MODE`, `LLM_ENDPOINT`,
    /// `LLM_MODEL` and `LLM_API_KEY` through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup("PORT") {
            self.port =
                v.parse().map_err(|_| ConfigError::Env { name: "PORT", reason: format!("{v:?} is not a port") })?;
        }
        if let Some(v) = lookup("DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = lookup("MODEL_PATH") {
            self.model_path = Some(v.into());
        }
        if let Some(v) = lookup("LLM_MODE") {
            self.llm.mode = match v.as_str() {
                "stub" => LlmMode::Stub,
                "live" => LlmMode::Live,
                _ => {
                    return Err(ConfigError::Env {
                        name: "LLM_MODE",
                        reason: format!("{v:?} is neither stub nor live"),
                    })
                }
            };
        }
        if let Some(v) = lookup("LLM_ENDPOINT") {
            self.llm.endpoint = Some(v);
        }
        if let Some(v) = lookup("LLM_MODEL") {
            self.llm.model = v;
        }
        if let Some(v) = lookup("LLM_API_KEY") {
            self.llm.api_key = Some(v);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sensing.speedup()?;
        if self.llm.mode == LlmMode::Live && self.llm.endpoint.is_none() {
            return Err(ConfigError::Invalid("llm.mode is live but no endpoint is set (LLM_ENDPOINT)".into()));
        }
        if self.sensing.enabled && self.model_path.is_none() {
            return Err(ConfigError::Invalid(
                "sensing is enabled but no model is configured; set MODEL_PATH or sensing.enabled = false".into(),
            ));
        }
        Ok(())
    }
}
