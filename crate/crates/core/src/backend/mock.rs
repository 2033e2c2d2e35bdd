//! Deterministic scripted backend.
//!
//! Responses are returned strictly in script order. Each entry names the
//! agent expected to make the call; in strict mode an entry may also pin a
//! prefix of the request's last user message. A mock instance belongs to one
//! simulation: interleaving calls from two simulations trips the speaker or
//! prefix check and fails with `ScriptMismatch`.

use std::io::BufRead;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};
use crate::model::AgentId;
use crate::tokens::{HeuristicEstimator, TokenEstimator};

/// One scripted reply. Serialized as one JSONL line of a mock script:
/// `{"speaker":S,"content":C}` with optional `prompt_tokens`,
/// `completion_tokens` and `expect_prefix`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub speaker: AgentId,
    pub content: String,
    /// Usage to report instead of the heuristic estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
    /// Strict mode: required prefix of the last user message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_prefix: Option<String>,
}

impl ScriptEntry {
    pub fn new(speaker: AgentId, content: impl Into<String>) -> Self {
        Self {
            speaker,
            content: content.into(),
            prompt_tokens: None,
            completion_tokens: None,
            expect_prefix: None,
        }
    }
}

#[derive(Debug)]
pub struct ScriptedMock {
    script: Vec<ScriptEntry>,
    cursor: Mutex<usize>,
}

impl ScriptedMock {
    pub fn new(script: Vec<ScriptEntry>) -> Self {
        Self {
            script,
            cursor: Mutex::new(0),
        }
    }

    /// Attaches one expected last-user-message prefix per entry, in order.
    pub fn strict(mut self, prefixes: impl IntoIterator<Item = String>) -> Self {
        for (entry, prefix) in self.script.iter_mut().zip(prefixes) {
            entry.expect_prefix = Some(prefix);
        }
        self
    }

    pub fn from_jsonl(reader: impl BufRead) -> Result<Self, String> {
        let mut script = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| format!("line {}: {e}", n + 1))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", n + 1))?;
            script.push(entry);
        }
        Ok(Self::new(script))
    }

    pub fn script(&self) -> &[ScriptEntry] {
        &self.script
    }

    pub fn cursor(&self) -> usize {
        *self.cursor.lock().expect("mock cursor poisoned")
    }

    pub fn remaining(&self) -> usize {
        self.script.len() - self.cursor()
    }
}

impl ChatBackend for ScriptedMock {
    fn complete(
        &self,
        agent: &AgentId,
        request: &ChatRequest,
    ) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let mut cursor = self.cursor.lock().expect("mock cursor poisoned");
        let entry = self
            .script
            .get(*cursor)
            .ok_or(BackendError::ScriptExhausted)?;
        if &entry.speaker != agent {
            return Err(BackendError::ScriptMismatch(format!(
                "entry {} expects a call from {}, got {}",
                *cursor, entry.speaker, agent
            )));
        }
        if let Some(prefix) = &entry.expect_prefix {
            let last = request.last_user_message().unwrap_or_default();
            if !last.starts_with(prefix.as_str()) {
                return Err(BackendError::ScriptMismatch(format!(
                    "entry {}: last user message {:?} does not start with {:?}",
                    *cursor, last, prefix
                )));
            }
        }
        *cursor += 1;
        let prompt_tokens = entry
            .prompt_tokens
            .unwrap_or_else(|| HeuristicEstimator.count(&request.messages));
        Ok(ChatResponse {
            content: entry.content.clone(),
            prompt_tokens: Some(prompt_tokens),
            completion_tokens: entry.completion_tokens,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChatMessage;
    use crate::tokens::estimate_tokens;

    fn id(s: &str) -> AgentId {
        AgentId::new(s).unwrap()
    }

    fn seller_request() -> ChatRequest {
        ChatRequest::new(
            "gpt-3.5-turbo",
            vec![
                ChatMessage::system("You are a Pokémon card dealer at a Pokémon convention."),
                ChatMessage::user("Hi, do you have a Charizard holographic card?"),
            ],
            1.0,
            None,
        )
        .unwrap()
    }

    #[test]
    fn returns_script_in_order() {
        let mock = ScriptedMock::new(vec![ScriptEntry::new(
            id("Seller"),
            "Yes, I have a Charizard holographic card. How much are you willing to pay for it?",
        )]);
        let resp = mock.complete(&id("Seller"), &seller_request()).unwrap();
        assert_eq!(
            resp.content,
            "Yes, I have a Charizard holographic card. How much are you willing to pay for it?"
        );
        assert_eq!(mock.cursor(), 1);
        assert_eq!(
            mock.complete(&id("Seller"), &seller_request()),
            Err(BackendError::ScriptExhausted)
        );
    }

    #[test]
    fn empty_script_is_exhausted() {
        let mock = ScriptedMock::new(vec![]);
        assert_eq!(
            mock.complete(&id("Seller"), &seller_request()),
            Err(BackendError::ScriptExhausted)
        );
    }

    #[test]
    fn prompt_tokens_come_from_heuristic() {
        let req = ChatRequest::new("m", vec![ChatMessage::system("")], 1.0, None).unwrap();
        // system message with empty content: 0 + 4 + 3
        let mock = ScriptedMock::new(vec![ScriptEntry::new(id("A"), "ok")]);
        assert_eq!(
            mock.complete(&id("A"), &req).unwrap().prompt_tokens,
            Some(7)
        );

        let mock = ScriptedMock::new(vec![ScriptEntry::new(id("Seller"), "ok")]);
        let req = seller_request();
        let resp = mock.complete(&id("Seller"), &req).unwrap();
        assert_eq!(
            resp.prompt_tokens,
            Some(estimate_tokens(&req.messages).tokens)
        );
    }

    #[test]
    fn injected_usage_is_echoed() {
        let mut entry = ScriptEntry::new(id("Seller"), "ok");
        entry.prompt_tokens = Some(522);
        entry.completion_tokens = Some(40);
        let mock = ScriptedMock::new(vec![entry]);
        let resp = mock.complete(&id("Seller"), &seller_request()).unwrap();
        assert_eq!(
            (resp.prompt_tokens, resp.completion_tokens),
            (Some(522), Some(40))
        );
    }

    #[test]
    fn wrong_speaker_is_mismatch_and_does_not_advance() {
        let mock = ScriptedMock::new(vec![ScriptEntry::new(id("Seller"), "ok")]);
        assert!(matches!(
            mock.complete(&id("Buyer"), &seller_request()),
            Err(BackendError::ScriptMismatch(_))
        ));
        assert_eq!(mock.cursor(), 0);
    }

    #[test]
    fn strict_prefix_checked() {
        let mock = ScriptedMock::new(vec![
            ScriptEntry::new(id("Seller"), "one"),
            ScriptEntry::new(id("Seller"), "two"),
        ])
        .strict(["Hi, do you".to_string(), "Something else".to_string()]);
        assert!(mock.complete(&id("Seller"), &seller_request()).is_ok());
        assert!(matches!(
            mock.complete(&id("Seller"), &seller_request()),
            Err(BackendError::ScriptMismatch(_))
        ));
    }

    #[test]
    fn parses_jsonl_script() {
        let text = "{\"speaker\":\"Seller\",\"content\":\"a\"}\n\n{\"speaker\":\"Buyer\",\"content\":\"b\",\"prompt_tokens\":9}\n";
        let mock = ScriptedMock::from_jsonl(text.as_bytes()).unwrap();
        assert_eq!(mock.script().len(), 2);
        assert_eq!(mock.script()[1].prompt_tokens, Some(9));
        assert!(
            ScriptedMock::from_jsonl("{\"speaker\":\"\",\"content\":\"a\"}".as_bytes()).is_err()
        );
    }
}
