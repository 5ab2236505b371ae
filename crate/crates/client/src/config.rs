use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ClientError;

/// Wire format of an inference endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ApiStyle {
    /// `POST {base_url}/chat/completions`, OpenAI chat format.
    OpenaiChat,
    /// `POST {base_url}/messages`, Anthropic messages format.
    AnthropicMessages,
    /// `POST {base_url}` with a flat JSON body, response text in `text`.
    GenericJson,
}

impl ApiStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::OpenaiChat => "openai-chat",
            Self::AnthropicMessages => "anthropic-messages",
            Self::GenericJson => "generic-json",
        }
    }
}

impl FromStr for ApiStyle {
    type Err = ClientError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "openai-chat" => Ok(Self::OpenaiChat),
            "anthropic-messages" => Ok(Self::AnthropicMessages),
            "generic-json" => Ok(Self::GenericJson),
            other => Err(ClientError::UnsupportedStyle(other.to_string())),
        }
    }
}

impl TryFrom<String> for ApiStyle {
    type Error = ClientError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ApiStyle> for String {
    fn from(s: ApiStyle) -> Self {
        s.as_str().to_string()
    }
}

impl fmt::Display for ApiStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_image_cap() -> usize {
    20 * 1024 * 1024
}
fn default_backoff() -> u64 {
    1000
}
fn default_max_tokens() -> u32 {
    4096
}

/// One inference endpoint. The API key itself never appears here, only the
/// name of the environment variable that holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub name: String,
    pub style: ApiStyle,
    pub base_url: String,
    pub api_key_env: String,
    pub model: String,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_image_cap")]
    pub max_image_bytes: usize,
    /// First backoff window in milliseconds; doubles per retry.
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Replaces the default output-contract instruction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
}

impl EndpointConfig {
    pub fn new(name: &str, style: ApiStyle, base_url: &str, api_key_env: &str, model: &str) -> Self {
        Self {
            name: name.into(),
            style,
            base_url: base_url.into(),
            api_key_env: api_key_env.into(),
            model: model.into(),
            timeout: default_timeout(),
            max_retries: default_retries(),
            max_concurrency: default_concurrency(),
            max_image_bytes: default_image_cap(),
            backoff_base_ms: default_backoff(),
            max_tokens: default_max_tokens(),
            system_prompt: None,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        let bad = |m: String| Err(ClientError::InvalidConfig(format!("endpoint {:?}: {m}", self.name)));
        if self.max_concurrency < 1 {
            return bad("max_concurrency must be at least 1".into());
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return bad("timeout must be positive".into());
        }
        if self.base_url.is_empty() {
            return bad("base_url is empty".into());
        }
        Ok(())
    }
}

/// Config file: `{"endpoints": [EndpointConfig, ...]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub endpoints: Vec<EndpointConfig>,
}

impl ClientConfig {
    pub fn from_json(text: &str) -> Result<Self, ClientError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ClientError::InvalidConfig(e.to_string()))?;
        for e in &cfg.endpoints {
            e.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ClientError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn endpoint(&self, name: &str) -> Result<&EndpointConfig, ClientError> {
        self.endpoints
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| ClientError::InvalidConfig(format!("no endpoint named {name:?}")))
    }
}
