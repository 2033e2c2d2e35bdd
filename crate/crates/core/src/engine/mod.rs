//! Simulation engines.
//!
//! [`Engine::run_one_to_one`] alternates two agents over a shared transcript;
//! [`Engine::run_one_to_many`] drives a hub agent that questions a set of
//! spokes and reads their answers back as a [`MemoryStream`]. Both stop on
//! the prompt-token budget, and a scripted backend running out of script ends
//! the run cleanly.

mod hub;
mod one_to_one;
pub mod outcome;

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatRequest, DEFAULT_MODEL, DEFAULT_TEMPERATURE};
use crate::model::{AgentId, ChatMessage, ModelError, Transcript, Turn};
use crate::tokens::{
    check_budget, BudgetStatus, HeuristicEstimator, TokenBudget, TokenEstimator, TokenLedger,
};

pub use hub::{
    FixedQuestion, HubSession, Interjector, MemoryStream, OneToManySpec, DEFAULT_ROUNDS, HUMAN,
    MEMORY_STREAM,
};
pub use one_to_one::{OneToOneSpec, DEFAULT_MAX_TURNS};
pub use outcome::{extract_deal, judge_verdict, DealOutcome, Verdict};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{0} returned an empty response")]
    EmptyResponse(AgentId),
    #[error("round has no spokes")]
    EmptyRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    TurnLimit,
    BudgetExhausted,
    ScriptEnd,
    RoundsComplete,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TurnLimit => "TurnLimit",
            Self::BudgetExhausted => "BudgetExhausted",
            Self::ScriptEnd => "ScriptEnd",
            Self::RoundsComplete => "RoundsComplete",
        }
    }
}

/// One backend call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallRecord {
    pub turn_index: usize,
    /// Estimate the budget check passed with before the call was issued.
    pub checked_tokens: u64,
    /// Reported prompt size, or `checked_tokens` when the backend reports none.
    pub prompt_tokens: u64,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub transcript: Transcript,
    pub termination: Termination,
    pub final_prompt_tokens: u64,
    pub calls: Vec<CallRecord>,
}

impl SimulationResult {
    /// `(turn index, prompt tokens)` for every backend call, in order.
    pub fn per_call_tokens(&self) -> Vec<(usize, u64)> {
        self.calls
            .iter()
            .map(|c| (c.turn_index, c.prompt_tokens))
            .collect()
    }
}

/// Receives every turn as soon as it is appended.
pub trait TranscriptSink {
    fn on_turn(&mut self, turn: &Turn);
}

impl<F: FnMut(&Turn)> TranscriptSink for F {
    fn on_turn(&mut self, turn: &Turn) {
        self(turn)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestSettings {
    pub model: String,
    pub temperature: f64,
    pub max_response_tokens: Option<u32>,
}

impl Default for RequestSettings {
    fn default() -> Self {
        Self {
            model: DEFAULT_MODEL.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_response_tokens: None,
        }
    }
}

pub struct Engine<'a> {
    backend: &'a dyn ChatBackend,
    estimator: &'a dyn TokenEstimator,
    settings: RequestSettings,
    sink: Option<&'a mut dyn TranscriptSink>,
}

impl<'a> Engine<'a> {
    pub fn new(backend: &'a dyn ChatBackend) -> Self {
        Self {
            backend,
            estimator: &HeuristicEstimator,
            settings: RequestSettings::default(),
            sink: None,
        }
    }

    pub fn with_estimator(mut self, estimator: &'a dyn TokenEstimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_settings(mut self, settings: RequestSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_sink(mut self, sink: &'a mut dyn TranscriptSink) -> Self {
        self.sink = Some(sink);
        self
    }

    fn emit(&mut self, turn: &Turn) {
        if let Some(sink) = self.sink.as_mut() {
            sink.on_turn(turn);
        }
    }
}

/// Mutable state shared by both topologies while a simulation runs.
struct RunState<'l> {
    transcript: Transcript,
    ledger: TokenLedger<'l>,
    calls: Vec<CallRecord>,
    budget: TokenBudget,
}

impl<'l> RunState<'l> {
    fn new(transcript: Transcript, estimator: &'l dyn TokenEstimator, budget: TokenBudget) -> Self {
        Self {
            transcript,
            ledger: TokenLedger::new(estimator),
            calls: Vec::new(),
            budget,
        }
    }

    fn finish(self, termination: Termination) -> SimulationResult {
        SimulationResult {
            final_prompt_tokens: self.calls.last().map_or(0, |c| c.prompt_tokens),
            transcript: self.transcript,
            termination,
            calls: self.calls,
        }
    }
}

impl Engine<'_> {
    fn inject(
        &mut self,
        state: &mut RunState<'_>,
        speaker: &AgentId,
        content: &str,
    ) -> Result<(), EngineError> {
        let turn = state.transcript.append(speaker, content, None)?.clone();
        self.emit(&turn);
        Ok(())
    }

    /// Budget-checks `view`, calls the backend as `agent` and appends the
    /// reply as `agent`'s turn. Breaks with the termination reason when the
    /// budget is spent or the script has run out.
    fn call_agent(
        &mut self,
        state: &mut RunState<'_>,
        agent: &AgentId,
        view: Vec<ChatMessage>,
    ) -> Result<ControlFlow<Termination, String>, EngineError> {
        let estimate = state.ledger.estimate(agent, &view);
        if check_budget(estimate, state.budget) == BudgetStatus::Exhausted {
            tracing::debug!(%agent, tokens = estimate.tokens, "budget exhausted");
            return Ok(ControlFlow::Break(Termination::BudgetExhausted));
        }
        let message_count = view.len();
        let request = ChatRequest::new(
            self.settings.model.clone(),
            view,
            self.settings.temperature,
            self.settings.max_response_tokens,
        )?;
        let response = match self.backend.complete(agent, &request) {
            Ok(response) => response,
            Err(BackendError::ScriptExhausted) => {
                return Ok(ControlFlow::Break(Termination::ScriptEnd))
            }
            Err(BackendError::BudgetRejected(reason)) => {
                tracing::debug!(%agent, %reason, "backend rejected prompt size");
                return Ok(ControlFlow::Break(Termination::BudgetExhausted));
            }
            Err(err) => return Err(err.into()),
        };
        if response.content.is_empty() {
            return Err(EngineError::EmptyResponse(agent.clone()));
        }
        if let Some(reported) = response.prompt_tokens {
            state.ledger.record_reported(agent, message_count, reported);
        }
        let prompt_tokens = response.prompt_tokens.unwrap_or(estimate.tokens);
        let turn = state
            .transcript
            .append_with_usage(
                agent,
                response.content,
                Some(prompt_tokens),
                response.completion_tokens,
            )?
            .clone();
        state.calls.push(CallRecord {
            turn_index: turn.index,
            checked_tokens: estimate.tokens,
            prompt_tokens,
        });
        self.emit(&turn);
        Ok(ControlFlow::Continue(turn.content))
    }
}
