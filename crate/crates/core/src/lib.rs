//! Multi-agent LLM dialog simulation.
//!
//! Agents are defined by a persona (installed as the system message of their
//! private view) and talk to each other through a chat-completion backend.
//! Two topologies are supported:
//!
//! * one-to-one: two agents alternate turns, each conditioned on the whole
//!   shared transcript ([`engine::Engine::run_one_to_one`]);
//! * one-to-many: a hub agent questions a fixed set of spokes and receives
//!   their concatenated answers as a memory stream
//!   ([`engine::Engine::run_one_to_many`]).
//!
//! Every simulation is bounded by a prompt-token budget ([`tokens`]).
//! Backends are pluggable ([`backend`]): a Chat-Completions wire client and a
//! deterministic scripted mock used for golden replays.

pub mod backend;
pub mod engine;
pub mod model;
pub mod persona;
pub mod scenario;
pub mod tokens;

pub use model::{AgentId, ChatMessage, ChatRole, ModelError, Persona, Transcript, Turn, TurnMode};
pub use tokens::{HeuristicEstimator, TokenBudget, TokenEstimate, TokenEstimator};
