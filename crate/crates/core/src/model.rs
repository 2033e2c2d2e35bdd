//! Agents, personas, transcripts and per-agent view projection.
//!
//! The [`Transcript`] is the only record of a conversation. An agent's chat
//! view is never stored; it is recomputed from the transcript every time with
//! [`project_view`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("agent name must not be empty")]
    EmptyName,
    #[error("agent name {0:?} contains a newline")]
    NewlineInName(String),
    #[error("persona for {0} has empty text")]
    EmptyPersona(AgentId),
    #[error("duplicate agent name {0}")]
    DuplicateAgent(AgentId),
    #[error("persona belongs to {persona}, not {view}")]
    PersonaMismatch { persona: AgentId, view: AgentId },
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("{0} cannot speak twice in a row in an alternating transcript")]
    AlternationViolation(AgentId),
    #[error("turn content must not be empty")]
    EmptyContent,
}

/// Name of an agent. Nonempty, newline-free, compared case-sensitively.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgentId(String);

impl AgentId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::EmptyName);
        }
        if name.contains(['\n', '\r']) {
            return Err(ModelError::NewlineInName(name));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for AgentId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<AgentId> for String {
    fn from(id: AgentId) -> Self {
        id.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<str> for AgentId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for AgentId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    Assistant,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::System,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            content: content.into(),
        }
    }
}

/// The identity text installed as an agent's system message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPersona")]
pub struct Persona {
    pub agent: AgentId,
    pub text: String,
}

#[derive(Deserialize)]
struct RawPersona {
    agent: AgentId,
    text: String,
}

impl TryFrom<RawPersona> for Persona {
    type Error = ModelError;

    fn try_from(raw: RawPersona) -> Result<Self, Self::Error> {
        Persona::new(raw.agent, raw.text)
    }
}

impl Persona {
    pub fn new(agent: AgentId, text: impl Into<String>) -> Result<Self, ModelError> {
        let text = text.into();
        if text.is_empty() {
            return Err(ModelError::EmptyPersona(agent));
        }
        Ok(Self { agent, text })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub index: usize,
    pub speaker: AgentId,
    pub content: String,
    /// Prompt size of the backend call that produced this turn. `None` for
    /// injected turns (seeds, memory streams, human questions).
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// Speaker discipline enforced on append.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurnMode {
    /// One-to-one: consecutive turns must have different speakers.
    Alternating,
    /// Hub mode: any participant may follow any other.
    Free,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    turns: Vec<Turn>,
    participants: Vec<AgentId>,
    mode: TurnMode,
}

impl Transcript {
    pub fn new(
        participants: impl IntoIterator<Item = AgentId>,
        mode: TurnMode,
    ) -> Result<Self, ModelError> {
        let mut seen: Vec<AgentId> = Vec::new();
        for agent in participants {
            if seen.contains(&agent) {
                return Err(ModelError::DuplicateAgent(agent));
            }
            seen.push(agent);
        }
        Ok(Self {
            turns: Vec::new(),
            participants: seen,
            mode,
        })
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn participants(&self) -> &[AgentId] {
        &self.participants
    }

    pub fn mode(&self) -> TurnMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn last(&self) -> Option<&Turn> {
        self.turns.last()
    }

    pub fn is_participant(&self, agent: &AgentId) -> bool {
        self.participants.contains(agent)
    }

    /// Appends a turn, returning a reference to it. The new turn's index is
    /// the previous length.
    pub fn append(
        &mut self,
        speaker: &AgentId,
        content: impl Into<String>,
        prompt_tokens: Option<u64>,
    ) -> Result<&Turn, ModelError> {
        self.append_with_usage(speaker, content, prompt_tokens, None)
    }

    pub fn append_with_usage(
        &mut self,
        speaker: &AgentId,
        content: impl Into<String>,
        prompt_tokens: Option<u64>,
        completion_tokens: Option<u64>,
    ) -> Result<&Turn, ModelError> {
        let content = content.into();
        if !self.is_participant(speaker) {
            return Err(ModelError::UnknownAgent(speaker.clone()));
        }
        if content.is_empty() {
            return Err(ModelError::EmptyContent);
        }
        if self.mode == TurnMode::Alternating
            && self.turns.last().is_some_and(|t| &t.speaker == speaker)
        {
            return Err(ModelError::AlternationViolation(speaker.clone()));
        }
        self.turns.push(Turn {
            index: self.turns.len(),
            speaker: speaker.clone(),
            content,
            prompt_tokens,
            completion_tokens,
        });
        Ok(self.turns.last().expect("just pushed"))
    }
}

/// Projects the transcript into `self_id`'s chat view: the persona as the
/// single leading system message, then one message per turn. The agent's own
/// turns become `Assistant`, everyone else's become `User`. Adjacent turns
/// with the same role are kept separate.
pub fn project_view(
    transcript: &Transcript,
    self_id: &AgentId,
    persona: &Persona,
) -> Result<Vec<ChatMessage>, ModelError> {
    project_view_with(transcript, self_id, persona, |_| true)
}

/// Like [`project_view`] but only turns accepted by `include` are projected.
/// Hub mode uses this to hide other agents' private exchanges.
pub fn project_view_with<F>(
    transcript: &Transcript,
    self_id: &AgentId,
    persona: &Persona,
    include: F,
) -> Result<Vec<ChatMessage>, ModelError>
where
    F: Fn(&Turn) -> bool,
{
    if &persona.agent != self_id {
        return Err(ModelError::PersonaMismatch {
            persona: persona.agent.clone(),
            view: self_id.clone(),
        });
    }
    if !transcript.is_participant(self_id) {
        return Err(ModelError::UnknownAgent(self_id.clone()));
    }
    let mut view = Vec::with_capacity(transcript.len() + 1);
    view.push(ChatMessage::system(persona.text.clone()));
    view.extend(
        transcript
            .turns()
            .iter()
            .filter(|t| include(t))
            .map(|turn| {
                let role = if &turn.speaker == self_id {
                    ChatRole::Assistant
                } else {
                    ChatRole::User
                };
                ChatMessage {
                    role,
                    content: turn.content.clone(),
                }
            }),
    );
    Ok(view)
}
