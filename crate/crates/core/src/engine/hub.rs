//! One-to-many dialog: a hub agent interrogates a fixed, ordered set of
//! spokes. Each round the hub's question goes to every spoke in turn; the
//! answers are concatenated into a memory stream which becomes the hub's next
//! user message.
//!
//! Everything is recorded in one transcript: hub questions (speaker = hub),
//! individual spoke answers (speaker = spoke), the aggregate stream (speaker
//! [`MEMORY_STREAM`]) and an optional closing question from [`HUMAN`]. Views
//! are filtered projections of it:
//!
//! * hub: persona, own questions as assistant, streams and the human
//!   question as user;
//! * spoke: persona, hub questions as user, own answers as assistant, plus
//!   earlier streams as user when `share_stream_with_spokes` is set.

use std::collections::HashSet;
use std::ops::ControlFlow;

use super::{judge_verdict, Engine, EngineError, RunState, SimulationResult, Termination, Verdict};
use crate::model::{project_view_with, AgentId, ChatMessage, Persona, Transcript, TurnMode};
use crate::tokens::TokenBudget;

/// Speaker name of aggregate memory-stream turns.
pub const MEMORY_STREAM: &str = "Memory Stream";
/// Speaker name of the closing question.
pub const HUMAN: &str = "Human";
pub const DEFAULT_ROUNDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryStream {
    pub round_index: usize,
    pub entries: Vec<(AgentId, String)>,
    pub rendered: String,
}

impl MemoryStream {
    pub fn new(round_index: usize, entries: Vec<(AgentId, String)>) -> Self {
        let rendered = entries
            .iter()
            .map(|(name, content)| format!("{name} said: {content}"))
            .collect::<Vec<_>>()
            .join(" ");
        Self {
            round_index,
            entries,
            rendered,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OneToManySpec {
    pub hub: Persona,
    pub spokes: Vec<Persona>,
    pub seed_question: String,
    pub rounds: usize,
    pub final_question: Option<String>,
    pub budget: TokenBudget,
    pub share_stream_with_spokes: bool,
}

impl OneToManySpec {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.spokes.is_empty() {
            return Err(EngineError::InvalidSpec(
                "at least one spoke is required".into(),
            ));
        }
        let mut names = HashSet::new();
        for persona in std::iter::once(&self.hub).chain(&self.spokes) {
            let name = persona.agent.as_str();
            if name == HUMAN || name == MEMORY_STREAM {
                return Err(EngineError::InvalidSpec(format!(
                    "agent name {name:?} is reserved"
                )));
            }
            if !names.insert(name) {
                return Err(EngineError::InvalidSpec(format!(
                    "duplicate agent name {name}"
                )));
            }
        }
        if self.seed_question.is_empty() {
            return Err(EngineError::InvalidSpec("seed question is empty".into()));
        }
        if self.final_question.as_deref() == Some("") {
            return Err(EngineError::InvalidSpec("final question is empty".into()));
        }
        Ok(())
    }

    pub fn spoke_ids(&self) -> Vec<AgentId> {
        self.spokes.iter().map(|p| p.agent.clone()).collect()
    }
}

/// Supplies the closing question once all rounds are done.
pub trait Interjector {
    /// `None` skips the closing question.
    fn ask(&mut self) -> Option<String>;

    fn answered(&mut self, _answer: &str) {}
}

pub struct FixedQuestion(pub Option<String>);

impl Interjector for FixedQuestion {
    fn ask(&mut self) -> Option<String> {
        self.0.take()
    }
}

fn reserved(name: &str) -> AgentId {
    AgentId::new(name).expect("reserved names are valid")
}

/// Step-wise driver of a one-to-many simulation.
pub struct HubSession<'e, 'a> {
    engine: &'e mut Engine<'a>,
    state: RunState<'a>,
    hub: Persona,
    spokes: Vec<Persona>,
    share_stream: bool,
    stream_id: AgentId,
    human_id: AgentId,
    rounds_done: usize,
}

impl<'e, 'a> HubSession<'e, 'a> {
    /// Validates the spec and injects the seed question as the hub's first
    /// turn.
    pub fn start(engine: &'e mut Engine<'a>, spec: &OneToManySpec) -> Result<Self, EngineError> {
        spec.validate()?;
        let stream_id = reserved(MEMORY_STREAM);
        let human_id = reserved(HUMAN);
        let participants = std::iter::once(spec.hub.agent.clone())
            .chain(spec.spoke_ids())
            .chain([stream_id.clone(), human_id.clone()]);
        let transcript = Transcript::new(participants, TurnMode::Free)?;
        let state = RunState::new(transcript, engine.estimator, spec.budget);
        let mut session = Self {
            engine,
            state,
            hub: spec.hub.clone(),
            spokes: spec.spokes.clone(),
            share_stream: spec.share_stream_with_spokes,
            stream_id,
            human_id,
            rounds_done: 0,
        };
        let hub_id = session.hub.agent.clone();
        session
            .engine
            .inject(&mut session.state, &hub_id, &spec.seed_question)?;
        Ok(session)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.state.transcript
    }

    pub fn rounds_done(&self) -> usize {
        self.rounds_done
    }

    pub fn hub_view(&self) -> Result<Vec<ChatMessage>, EngineError> {
        let hub = &self.hub.agent;
        let (stream, human) = (&self.stream_id, &self.human_id);
        Ok(project_view_with(
            &self.state.transcript,
            hub,
            &self.hub,
            |t| &t.speaker == hub || &t.speaker == stream || &t.speaker == human,
        )?)
    }

    pub fn spoke_view(&self, spoke: &Persona) -> Result<Vec<ChatMessage>, EngineError> {
        let (hub, me, stream) = (&self.hub.agent, &spoke.agent, &self.stream_id);
        let share = self.share_stream;
        Ok(project_view_with(&self.state.transcript, me, spoke, |t| {
            &t.speaker == hub || &t.speaker == me || (share && &t.speaker == stream)
        })?)
    }

    /// Asks every spoke the hub's latest question, in order, and records the
    /// resulting memory stream. Spokes never see each other's answers.
    pub fn run_round(&mut self) -> Result<ControlFlow<Termination, MemoryStream>, EngineError> {
        if self.spokes.is_empty() {
            return Err(EngineError::EmptyRound);
        }
        let mut entries = Vec::with_capacity(self.spokes.len());
        for i in 0..self.spokes.len() {
            let spoke = &self.spokes[i];
            let view = self.spoke_view(spoke)?;
            let agent = spoke.agent.clone();
            match self.engine.call_agent(&mut self.state, &agent, view)? {
                ControlFlow::Continue(answer) => entries.push((agent, answer)),
                ControlFlow::Break(reason) => return Ok(ControlFlow::Break(reason)),
            }
        }
        let stream = MemoryStream::new(self.rounds_done, entries);
        let stream_id = self.stream_id.clone();
        self.engine
            .inject(&mut self.state, &stream_id, &stream.rendered)?;
        self.rounds_done += 1;
        Ok(ControlFlow::Continue(stream))
    }

    /// Lets the hub respond to everything it has seen so far.
    pub fn hub_reply(&mut self) -> Result<ControlFlow<Termination, String>, EngineError> {
        let view = self.hub_view()?;
        let hub = self.hub.agent.clone();
        self.engine.call_agent(&mut self.state, &hub, view)
    }

    pub fn interject(&mut self, question: &str) -> Result<(), EngineError> {
        let human = self.human_id.clone();
        self.engine.inject(&mut self.state, &human, question)
    }

    pub fn finish(self, termination: Termination) -> SimulationResult {
        self.state.finish(termination)
    }
}

impl Engine<'_> {
    /// Runs `spec.rounds` interrogation rounds, then poses
    /// `spec.final_question` (if any) to the hub and judges its answer.
    pub fn run_one_to_many(
        &mut self,
        spec: &OneToManySpec,
    ) -> Result<(SimulationResult, Option<Verdict>), EngineError> {
        let mut fixed = FixedQuestion(spec.final_question.clone());
        self.run_one_to_many_with(spec, &mut fixed)
    }

    /// As [`Engine::run_one_to_many`] with the closing question taken from
    /// `interjector` instead of the spec.
    pub fn run_one_to_many_with(
        &mut self,
        spec: &OneToManySpec,
        interjector: &mut dyn Interjector,
    ) -> Result<(SimulationResult, Option<Verdict>), EngineError> {
        let mut session = HubSession::start(self, spec)?;
        for _ in 0..spec.rounds {
            if let ControlFlow::Break(reason) = session.run_round()? {
                return Ok((session.finish(reason), None));
            }
            if let ControlFlow::Break(reason) = session.hub_reply()? {
                return Ok((session.finish(reason), None));
            }
        }
        let Some(question) = interjector.ask() else {
            return Ok((session.finish(Termination::RoundsComplete), None));
        };
        session.interject(&question)?;
        match session.hub_reply()? {
            ControlFlow::Break(reason) => Ok((session.finish(reason), None)),
            ControlFlow::Continue(answer) => {
                interjector.answered(&answer);
                let verdict = judge_verdict(&answer, &spec.spoke_ids());
                Ok((session.finish(Termination::RoundsComplete), Some(verdict)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptEntry, ScriptedMock};
    use crate::model::ChatRole;

    fn id(s: &str) -> AgentId {
        AgentId::new(s).unwrap()
    }

    fn persona(name: &str) -> Persona {
        Persona::new(id(name), format!("You are {name}.")).unwrap()
    }

    fn spec(spokes: &[&str], rounds: usize, final_question: Option<&str>) -> OneToManySpec {
        OneToManySpec {
            hub: persona("Captain"),
            spokes: spokes.iter().map(|s| persona(s)).collect(),
            seed_question: "Introduce yourself.".into(),
            rounds,
            final_question: final_question.map(String::from),
            budget: TokenBudget::default(),
            share_stream_with_spokes: false,
        }
    }

    #[test]
    fn single_entry_render() {
        let s = MemoryStream::new(0, vec![(id("Alice"), "No.".into())]);
        assert_eq!(s.rendered, "Alice said: No.");
    }

    #[test]
    fn three_entry_render_matches_join_oracle() {
        let entries = vec![
            (id("Bob"), "I teach.".to_string()),
            (id("Nancy"), "I garden.".to_string()),
            (id("Max"), "I read.".to_string()),
        ];
        let mut oracle = String::new();
        for (i, (name, content)) in entries.iter().enumerate() {
            if i > 0 {
                oracle.push(' ');
            }
            oracle += name.as_str();
            oracle += " said: ";
            oracle += content;
        }
        assert_eq!(MemoryStream::new(0, entries).rendered, oracle);
    }

    #[test]
    fn one_spoke_round() {
        let mock = ScriptedMock::new(vec![ScriptEntry::new(id("Alice"), "No.")]);
        let mut engine = Engine::new(&mock);
        let mut s = spec(&["Alice"], 1, None);
        s.seed_question = "Q?".into();
        let mut session = HubSession::start(&mut engine, &s).unwrap();
        let view = session.spoke_view(&s.spokes[0]).unwrap();
        assert_eq!(view.last().unwrap(), &ChatMessage::user("Q?"));
        let stream = match session.run_round().unwrap() {
            ControlFlow::Continue(stream) => stream,
            ControlFlow::Break(t) => panic!("stopped: {t:?}"),
        };
        assert_eq!(stream.rendered, "Alice said: No.");
        assert_eq!(
            session.transcript().last().unwrap().speaker,
            id(MEMORY_STREAM)
        );
    }

    fn round_script(spokes: &[&str], rounds: usize, with_final: bool) -> Vec<ScriptEntry> {
        let mut script = Vec::new();
        for r in 0..rounds {
            for s in spokes {
                script.push(ScriptEntry::new(id(s), format!("{s} answer {r}")));
            }
            script.push(ScriptEntry::new(
                id("Captain"),
                format!("Question {}?", r + 1),
            ));
        }
        if with_final {
            script.push(ScriptEntry::new(id("Captain"), "Bob looks guilty."));
        }
        script
    }

    #[test]
    fn full_run_with_final_question() {
        let spokes = ["Bob", "Nancy"];
        let mock = ScriptedMock::new(round_script(&spokes, 2, true));
        let s = spec(&spokes, 2, Some("Who did it?"));
        let (result, verdict) = Engine::new(&mock).run_one_to_many(&s).unwrap();
        assert_eq!(result.termination, Termination::RoundsComplete);
        let verdict = verdict.unwrap();
        assert_eq!(verdict.accused, Some(id("Bob")));
        let speakers: Vec<_> = result
            .transcript
            .turns()
            .iter()
            .map(|t| t.speaker.to_string())
            .collect();
        assert_eq!(
            speakers,
            [
                "Captain",
                "Bob",
                "Nancy",
                MEMORY_STREAM,
                "Captain",
                "Bob",
                "Nancy",
                MEMORY_STREAM,
                "Captain",
                HUMAN,
                "Captain"
            ]
        );
        // hub calls see strictly growing prompts
        let hub_calls: Vec<u64> = result
            .calls
            .iter()
            .filter(|c| result.transcript.turns()[c.turn_index].speaker == id("Captain"))
            .map(|c| c.prompt_tokens)
            .collect();
        assert_eq!(hub_calls.len(), 3);
        assert!(hub_calls.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hub_view_counts_after_each_round() {
        let spokes = ["Bob", "Nancy", "Max"];
        let mock = ScriptedMock::new(round_script(&spokes, 3, false));
        let mut engine = Engine::new(&mock);
        let s = spec(&spokes, 3, None);
        let mut session = HubSession::start(&mut engine, &s).unwrap();
        for k in 1..=3 {
            assert!(session.run_round().unwrap().is_continue());
            assert!(session.hub_reply().unwrap().is_continue());
            let view = session.hub_view().unwrap();
            let count = |role| view.iter().filter(|m| m.role == role).count();
            assert_eq!(view[0].role, ChatRole::System);
            assert_eq!(count(ChatRole::System), 1);
            assert_eq!(count(ChatRole::Assistant), k + 1);
            assert_eq!(count(ChatRole::User), k);
        }
    }

    #[test]
    fn spokes_do_not_see_each_other() {
        let spokes = ["Bob", "Nancy"];
        let mock = ScriptedMock::new(round_script(&spokes, 2, false));
        let mut engine = Engine::new(&mock);
        let s = spec(&spokes, 2, None);
        let mut session = HubSession::start(&mut engine, &s).unwrap();
        let _ = session.run_round().unwrap();
        let _ = session.hub_reply().unwrap();
        let nancy = session.spoke_view(&s.spokes[1]).unwrap();
        let texts: Vec<_> = nancy.iter().map(|m| (m.role, m.content.as_str())).collect();
        assert_eq!(
            texts,
            [
                (ChatRole::System, "You are Nancy."),
                (ChatRole::User, "Introduce yourself."),
                (ChatRole::Assistant, "Nancy answer 0"),
                (ChatRole::User, "Question 1?"),
            ]
        );
    }

    #[test]
    fn shared_stream_reaches_spokes() {
        let spokes = ["Bob", "Nancy"];
        let mock = ScriptedMock::new(round_script(&spokes, 2, false));
        let mut engine = Engine::new(&mock);
        let mut s = spec(&spokes, 2, None);
        s.share_stream_with_spokes = true;
        let mut session = HubSession::start(&mut engine, &s).unwrap();
        let _ = session.run_round().unwrap();
        let _ = session.hub_reply().unwrap();
        let bob = session.spoke_view(&s.spokes[0]).unwrap();
        assert_eq!(bob.len(), 5);
        assert_eq!(
            bob[3],
            ChatMessage::user("Bob said: Bob answer 0 Nancy said: Nancy answer 0")
        );
    }

    #[test]
    fn zero_rounds_answers_from_seed_only() {
        let mock = ScriptedMock::new(vec![ScriptEntry::new(id("Captain"), "No idea yet.")]);
        let s = spec(&["Bob"], 0, Some("Who is it?"));
        let (result, verdict) = Engine::new(&mock).run_one_to_many(&s).unwrap();
        let turns = result.transcript.turns();
        assert_eq!(turns.len(), 3);
        assert_eq!(turns[1].speaker, id(HUMAN));
        assert_eq!(verdict.unwrap().accused, None);
        let expected_view = [
            ChatMessage::system("You are Captain."),
            ChatMessage::assistant("Introduce yourself."),
            ChatMessage::user("Who is it?"),
        ];
        assert_eq!(
            result.final_prompt_tokens,
            crate::tokens::estimate_tokens(&expected_view).tokens
        );
    }

    #[test]
    fn script_end_mid_round() {
        let mock = ScriptedMock::new(vec![ScriptEntry::new(id("Bob"), "hi")]);
        let (result, verdict) = Engine::new(&mock)
            .run_one_to_many(&spec(&["Bob", "Nancy"], 2, None))
            .unwrap();
        assert_eq!(result.termination, Termination::ScriptEnd);
        assert!(verdict.is_none());
        assert_eq!(result.transcript.len(), 2);
    }

    #[test]
    fn budget_stops_hub_mode() {
        let mock = ScriptedMock::new(round_script(&["Bob"], 2, false));
        let mut s = spec(&["Bob"], 2, None);
        s.budget = TokenBudget::new(5).unwrap();
        let (result, _) = Engine::new(&mock).run_one_to_many(&s).unwrap();
        assert_eq!(result.termination, Termination::BudgetExhausted);
        assert_eq!(result.transcript.len(), 1);
    }

    #[test]
    fn spec_validation() {
        let mock = ScriptedMock::new(vec![]);
        let mut engine = Engine::new(&mock);
        assert!(matches!(
            engine.run_one_to_many(&spec(&[], 1, None)),
            Err(EngineError::InvalidSpec(_))
        ));
        assert!(engine
            .run_one_to_many(&spec(&["Bob", "Bob"], 1, None))
            .is_err());
        assert!(engine
            .run_one_to_many(&spec(&["Captain"], 1, None))
            .is_err());
        assert!(engine.run_one_to_many(&spec(&["Human"], 1, None)).is_err());
        assert!(engine
            .run_one_to_many(&spec(&["Bob"], 1, Some("")))
            .is_err());
    }

    struct Recorder {
        question: Option<String>,
        answers: Vec<String>,
    }

    impl Interjector for Recorder {
        fn ask(&mut self) -> Option<String> {
            self.question.take()
        }

        fn answered(&mut self, answer: &str) {
            self.answers.push(answer.to_string());
        }
    }

    #[test]
    fn interjector_receives_answer() {
        let mock = ScriptedMock::new(vec![ScriptEntry::new(id("Captain"), "Nancy, clearly.")]);
        let s = spec(&["Bob", "Nancy"], 0, None);
        let mut rec = Recorder {
            question: Some("Who?".into()),
            answers: vec![],
        };
        let (_, verdict) = Engine::new(&mock)
            .run_one_to_many_with(&s, &mut rec)
            .unwrap();
        assert_eq!(rec.answers, ["Nancy, clearly."]);
        assert_eq!(verdict.unwrap().accused, Some(id("Nancy")));

        let mut silent = Recorder {
            question: None,
            answers: vec![],
        };
        let (result, verdict) = Engine::new(&mock)
            .run_one_to_many_with(&s, &mut silent)
            .unwrap();
        assert!(verdict.is_none());
        assert!(result
            .transcript
            .turns()
            .iter()
            .all(|t| t.speaker != id(HUMAN)));
    }
}
