//! Client for Chat-Completions-compatible HTTP endpoints.
//!
//! `POST {base_url}/v1/chat/completions` with a bearer key; consumes
//! `choices[0].message.content` and the `usage` counters. A single call is
//! made per `complete`; wrap the client in [`super::Retrying`] for backoff.

use std::time::Duration;

use serde::Deserialize;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};
use crate::model::AgentId;

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const API_KEY_VARS: [&str; 2] = ["LLMSIM_API_KEY", "OPENAI_API_KEY"];

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl LiveConfig {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// Reads the key from `LLMSIM_API_KEY`, falling back to `OPENAI_API_KEY`.
    pub fn from_env(base_url: impl Into<String>) -> Result<Self, BackendError> {
        api_key_from(|var| std::env::var(var).ok())
            .map(|key| Self::new(base_url, key))
            .ok_or_else(|| {
                BackendError::InvalidRequest(format!(
                    "no API key: set {} or {}",
                    API_KEY_VARS[0], API_KEY_VARS[1]
                ))
            })
    }
}

fn api_key_from(lookup: impl Fn(&str) -> Option<String>) -> Option<String> {
    API_KEY_VARS
        .iter()
        .find_map(|var| lookup(var).filter(|k| !k.is_empty()))
}

pub struct ChatCompletionsClient {
    endpoint: String,
    authorization: String,
    agent: ureq::Agent,
}

impl ChatCompletionsClient {
    pub fn new(config: LiveConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: format!(
                "{}/v1/chat/completions",
                config.base_url.trim_end_matches('/')
            ),
            authorization: format!("Bearer {}", config.api_key),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

#[derive(Deserialize)]
struct WireErrorBody {
    error: WireError,
}

#[derive(Deserialize)]
struct WireError {
    #[serde(default)]
    message: String,
    #[serde(default)]
    code: Option<String>,
}

fn is_context_overflow(err: &WireError) -> bool {
    err.code.as_deref() == Some("context_length_exceeded")
        || err.message.contains("maximum context length")
}

/// Maps a non-2xx status and body to an error.
fn classify_status(status: u16, body: &str) -> BackendError {
    let parsed = serde_json::from_str::<WireErrorBody>(body).ok();
    let message = parsed
        .as_ref()
        .map(|b| b.error.message.clone())
        .unwrap_or_else(|| body.to_string());
    match status {
        429 => BackendError::RateLimited(message),
        400 | 413
            if parsed
                .as_ref()
                .is_some_and(|b| is_context_overflow(&b.error)) =>
        {
            BackendError::BudgetRejected(message)
        }
        500..=599 => BackendError::Transport(format!("HTTP {status}: {message}")),
        _ => BackendError::Api { status, message },
    }
}

fn parse_success(body: &str) -> Result<ChatResponse, BackendError> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
    let (prompt_tokens, completion_tokens) = wire
        .usage
        .map(|u| (u.prompt_tokens, u.completion_tokens))
        .unwrap_or((None, None));
    Ok(ChatResponse {
        content: choice.message.content.unwrap_or_default(),
        prompt_tokens,
        completion_tokens,
    })
}

impl ChatBackend for ChatCompletionsClient {
    fn complete(
        &self,
        agent: &AgentId,
        request: &ChatRequest,
    ) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let body = request.to_wire_json();
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &self.authorization)
            .header("Content-Type", "application/json")
            .send(&body[..])
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let parsed = parse_success(&text)?;
        tracing::info!(
            agent = %agent,
            prompt_tokens = ?parsed.prompt_tokens,
            completion_tokens = ?parsed.completion_tokens,
            "chat completion"
        );
        Ok(parsed)
    }
}
