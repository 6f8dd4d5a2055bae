//! OpenAI-compatible chat completion client.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::steering::AnchorExport;
use crate::transport::{EndpointConfig, JsonClient, TransportError};

/// Environment variable holding the chat API key.
pub const API_KEY_ENV: &str = "CHAT_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatConfig {
    #[serde(flatten)]
    pub endpoint: EndpointConfig,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    /// Anchor spans for a steering-aware server; sent as a top-level `steering` field.
    pub steering: Option<AnchorExport>,
    pub seed: Option<u64>,
}

/// One logged request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: Value,
    pub response: Option<String>,
    pub error: Option<String>,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChatError {
    #[error("environment variable {0} is not set")]
    MissingApiKey(&'static str),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("chat response has no message content: {0}")]
    MalformedResponse(String),
}

#[derive(Debug)]
pub struct ChatClient {
    http: JsonClient,
    config: ChatConfig,
    exchanges: Vec<ChatExchange>,
}

impl ChatClient {
    pub fn new(config: ChatConfig, api_key: Option<String>) -> Result<Self, ChatError> {
        Ok(Self {
            http: JsonClient::new(&config.endpoint, api_key)?,
            config,
            exchanges: Vec::new(),
        })
    }

    /// Reads the API key from [`API_KEY_ENV`]; fails before any network use.
    pub fn from_env(config: ChatConfig) -> Result<Self, ChatError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or(ChatError::MissingApiKey(API_KEY_ENV))?;
        Self::new(config, Some(key))
    }

    pub fn config(&self) -> &ChatConfig {
        &self.config
    }

    pub fn exchanges(&self) -> &[ChatExchange] {
        &self.exchanges
    }

    pub fn chat(&mut self, request: &ChatRequest) -> Result<String, ChatError> {
        let mut body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": request.messages,
        });
        if let Some(steering) = &request.steering {
            body["steering"] = serde_json::to_value(steering).expect("anchor export serializes");
        }
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        let result = self
            .http
            .post("chat/completions", &body)
            .map_err(ChatError::from)
            .and_then(|reply| {
                let text = reply.body["choices"][0]["message"]["content"]
                    .as_str()
                    .map(str::to_string)
                    .ok_or_else(|| ChatError::MalformedResponse(truncate(&reply.body.to_string(), 200)))?;
                Ok((text, reply.attempts))
            });
        match result {
            Ok((text, attempts)) => {
                self.exchanges.push(ChatExchange {
                    request: body,
                    response: Some(text.clone()),
                    error: None,
                    attempts,
                });
                Ok(text)
            }
            Err(err) => {
                let attempts = match &err {
                    ChatError::Transport(t) => t.attempts(),
                    _ => 1,
                };
                self.exchanges.push(ChatExchange {
                    request: body,
                    response: None,
                    error: Some(err.to_string()),
                    attempts,
                });
                Err(err)
            }
        }
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}
