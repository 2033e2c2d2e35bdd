//! Chat-completion backends.
//!
//! [`ChatBackend`] is the single interface the engines talk to. Two
//! implementations ship: [`http::ChatCompletionsClient`] for any
//! Chat-Completions-compatible endpoint, and [`mock::ScriptedMock`] which
//! plays back a fixed script for offline runs and golden replays.
//! [`retry::Retrying`] wraps either with the rate-limit retry policy.

pub mod http;
pub mod mock;
pub mod retry;

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::model::{AgentId, ChatMessage, ChatRole};

pub use http::{ChatCompletionsClient, LiveConfig};
pub use mock::{ScriptEntry, ScriptedMock};
pub use retry::{with_retry, RetryPolicy, Retrying};

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    /// The endpoint refused the prompt because it exceeds the context window.
    #[error("prompt rejected by backend as too long: {0}")]
    BudgetRejected(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {message}")]
    Api { status: u16, message: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("mock script mismatch: {0}")]
    ScriptMismatch(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::RateLimited(_) | Self::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_response_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(
        model: impl Into<String>,
        messages: Vec<ChatMessage>,
        temperature: f64,
        max_response_tokens: Option<u32>,
    ) -> Result<Self, BackendError> {
        let request = Self {
            model: model.into(),
            messages,
            temperature,
            max_response_tokens,
        };
        request.validate()?;
        Ok(request)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match self.messages.first() {
            None => return Err(BackendError::InvalidRequest("no messages".into())),
            Some(m) if m.role != ChatRole::System => {
                return Err(BackendError::InvalidRequest(
                    "first message must have role system".into(),
                ))
            }
            _ => {}
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_response_tokens == Some(0) {
            return Err(BackendError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The request body sent on the wire.
    pub fn to_wire_json(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Body<'a> {
            model: &'a str,
            messages: &'a [ChatMessage],
            temperature: f64,
            #[serde(skip_serializing_if = "Option::is_none")]
            max_tokens: Option<u32>,
        }
        serde_json::to_vec(&Body {
            model: &self.model,
            messages: &self.messages,
            temperature: self.temperature,
            max_tokens: self.max_response_tokens,
        })
        .expect("request body serializes")
    }

    /// Content of the last `User` message, if any.
    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == ChatRole::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// A chat-completion service.
///
/// `agent` names the agent on whose behalf the call is made. It is never sent
/// on the wire; the scripted mock uses it to check call order.
pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        agent: &AgentId,
        request: &ChatRequest,
    ) -> Result<ChatResponse, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(
        &self,
        agent: &AgentId,
        request: &ChatRequest,
    ) -> Result<ChatResponse, BackendError> {
        (**self).complete(agent, request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(
        &self,
        agent: &AgentId,
        request: &ChatRequest,
    ) -> Result<ChatResponse, BackendError> {
        (**self).complete(agent, request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(
        &self,
        agent: &AgentId,
        request: &ChatRequest,
    ) -> Result<ChatResponse, BackendError> {
        (**self).complete(agent, request)
    }
}
