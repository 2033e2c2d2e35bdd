use std::ops::ControlFlow;

use super::{Engine, EngineError, RunState, SimulationResult, Termination};
use crate::model::{project_view, Persona, Transcript, TurnMode};
use crate::tokens::TokenBudget;

pub const DEFAULT_MAX_TURNS: usize = 40;

#[derive(Debug, Clone)]
pub struct OneToOneSpec {
    pub agent_a: Persona,
    pub agent_b: Persona,
    pub seed_speaker: crate::model::AgentId,
    pub seed_message: String,
    pub budget: TokenBudget,
    /// Upper bound on transcript length, seed included.
    pub max_turns: usize,
}

impl OneToOneSpec {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.agent_a.agent == self.agent_b.agent {
            return Err(EngineError::InvalidSpec(format!(
                "both agents are named {}",
                self.agent_a.agent
            )));
        }
        if self.seed_speaker != self.agent_a.agent && self.seed_speaker != self.agent_b.agent {
            return Err(EngineError::InvalidSpec(format!(
                "seed speaker {} is not one of the two agents",
                self.seed_speaker
            )));
        }
        if self.seed_message.is_empty() {
            return Err(EngineError::InvalidSpec("seed message is empty".into()));
        }
        if self.max_turns == 0 {
            return Err(EngineError::InvalidSpec(
                "max_turns must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Engine<'_> {
    /// Runs a round-robin dialog. The seed turn is injected without a backend
    /// call; afterwards the two agents alternate, each seeing the whole
    /// transcript with its own turns as assistant messages.
    pub fn run_one_to_one(&mut self, spec: &OneToOneSpec) -> Result<SimulationResult, EngineError> {
        spec.validate()?;
        let transcript = Transcript::new(
            [spec.agent_a.agent.clone(), spec.agent_b.agent.clone()],
            TurnMode::Alternating,
        )?;
        let mut state = RunState::new(transcript, self.estimator, spec.budget);
        self.inject(&mut state, &spec.seed_speaker, &spec.seed_message)?;

        let (first, second) = if spec.seed_speaker == spec.agent_a.agent {
            (&spec.agent_b, &spec.agent_a)
        } else {
            (&spec.agent_a, &spec.agent_b)
        };
        for responder in [first, second].into_iter().cycle() {
            if state.transcript.len() >= spec.max_turns {
                return Ok(state.finish(Termination::TurnLimit));
            }
            let view = project_view(&state.transcript, &responder.agent, responder)?;
            if let ControlFlow::Break(reason) =
                self.call_agent(&mut state, &responder.agent, view)?
            {
                return Ok(state.finish(reason));
            }
        }
        unreachable!("cycle never ends")
    }
}
