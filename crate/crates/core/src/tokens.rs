//! Prompt-size estimation and the prompt-token budget.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, ChatMessage};

pub const DEFAULT_MAX_PROMPT_TOKENS: u64 = 4096;

/// Bytes per token assumed by [`HeuristicEstimator`].
pub const BYTES_PER_TOKEN: usize = 4;
/// Fixed per-message envelope cost (role markers, separators).
pub const MESSAGE_OVERHEAD: u64 = 4;
/// Fixed cost of priming the assistant reply.
pub const REPLY_PRIMING: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("max_prompt_tokens must be at least 1")]
pub struct InvalidBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBudget")]
pub struct TokenBudget {
    max_prompt_tokens: u64,
}

#[derive(Deserialize)]
struct RawBudget {
    max_prompt_tokens: u64,
}

impl TryFrom<RawBudget> for TokenBudget {
    type Error = InvalidBudget;

    fn try_from(raw: RawBudget) -> Result<Self, Self::Error> {
        TokenBudget::new(raw.max_prompt_tokens)
    }
}

impl TokenBudget {
    pub fn new(max_prompt_tokens: u64) -> Result<Self, InvalidBudget> {
        if max_prompt_tokens == 0 {
            return Err(InvalidBudget);
        }
        Ok(Self { max_prompt_tokens })
    }

    pub fn max_prompt_tokens(&self) -> u64 {
        self.max_prompt_tokens
    }
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            max_prompt_tokens: DEFAULT_MAX_PROMPT_TOKENS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenSource {
    Heuristic,
    BackendReported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenEstimate {
    pub tokens: u64,
    pub source: TokenSource,
}

impl TokenEstimate {
    pub fn heuristic(tokens: u64) -> Self {
        Self {
            tokens,
            source: TokenSource::Heuristic,
        }
    }

    pub fn reported(tokens: u64) -> Self {
        Self {
            tokens,
            source: TokenSource::BackendReported,
        }
    }
}

/// Counts prompt tokens for a message list. Implementations must be
/// deterministic and monotone under appending.
pub trait TokenEstimator: Send + Sync {
    fn count(&self, messages: &[ChatMessage]) -> u64;

    fn estimate(&self, messages: &[ChatMessage]) -> TokenEstimate {
        TokenEstimate::heuristic(self.count(messages))
    }
}

/// `ceil(bytes / 4) + 4` per message plus 3 for reply priming; 0 for an
/// empty list.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicEstimator;

impl HeuristicEstimator {
    pub fn message_tokens(message: &ChatMessage) -> u64 {
        message.content.len().div_ceil(BYTES_PER_TOKEN) as u64 + MESSAGE_OVERHEAD
    }
}

impl TokenEstimator for HeuristicEstimator {
    fn count(&self, messages: &[ChatMessage]) -> u64 {
        if messages.is_empty() {
            return 0;
        }
        messages.iter().map(Self::message_tokens).sum::<u64>() + REPLY_PRIMING
    }
}

pub fn estimate_tokens(messages: &[ChatMessage]) -> TokenEstimate {
    HeuristicEstimator.estimate(messages)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetStatus {
    Continue,
    Exhausted,
}

/// Inclusive at the limit: a prompt of exactly `max_prompt_tokens` may run.
pub fn check_budget(estimate: TokenEstimate, budget: TokenBudget) -> BudgetStatus {
    if estimate.tokens > budget.max_prompt_tokens {
        BudgetStatus::Exhausted
    } else {
        BudgetStatus::Continue
    }
}

#[derive(Debug, Clone, Copy)]
struct Anchor {
    reported: u64,
    message_count: usize,
}

/// Tracks, per agent, the last backend-reported prompt size so that the next
/// prompt can be estimated as that size plus the estimated growth since.
pub struct TokenLedger<'a> {
    estimator: &'a dyn TokenEstimator,
    anchors: HashMap<AgentId, Anchor>,
}

impl<'a> TokenLedger<'a> {
    pub fn new(estimator: &'a dyn TokenEstimator) -> Self {
        Self {
            estimator,
            anchors: HashMap::new(),
        }
    }

    pub fn estimator(&self) -> &dyn TokenEstimator {
        self.estimator
    }

    /// Estimates the prompt size of `view` for `agent`. When a reported size
    /// for an earlier prefix of this agent's view exists, the result is
    /// anchored on it and tagged `BackendReported`.
    pub fn estimate(&self, agent: &AgentId, view: &[ChatMessage]) -> TokenEstimate {
        let full = self.estimator.count(view);
        match self.anchors.get(agent) {
            Some(anchor) if anchor.message_count <= view.len() => {
                let prefix = self.estimator.count(&view[..anchor.message_count]);
                TokenEstimate::reported(anchor.reported + full.saturating_sub(prefix))
            }
            _ => TokenEstimate::heuristic(full),
        }
    }

    pub fn record_reported(&mut self, agent: &AgentId, message_count: usize, reported: u64) {
        self.anchors.insert(
            agent.clone(),
            Anchor {
                reported,
                message_count,
            },
        );
    }
}
