//! Runs a resolved scenario against a backend and persists the transcript;
//! replays a persisted transcript through a strict mock.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use super::config::{ConfigError, ResolvedScenario, Scenario, ScenarioConfig, ScenarioKind};
use super::transcript::{JsonlWriter, Record, SummaryRecord, TranscriptError, TranscriptFile};
use crate::backend::{
    BackendError, ChatBackend, ChatRequest, ChatResponse, ScriptEntry, ScriptedMock,
};
use crate::engine::{
    extract_deal, Engine, EngineError, FixedQuestion, Interjector, SimulationResult, Termination,
    Verdict, HUMAN, MEMORY_STREAM,
};
use crate::model::AgentId;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Engine(EngineError),
    Io(io::Error),
    Transcript(TranscriptError),
}

impl RunError {
    /// 2 for invalid input, 3 for backend failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Engine(EngineError::Backend(_) | EngineError::EmptyResponse(_)) => 3,
            Self::Engine(_) => 2,
            Self::Io(_) | Self::Transcript(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::Engine(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "transcript output: {e}"),
            Self::Transcript(e) => write!(f, "transcript: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<EngineError> for RunError {
    fn from(e: EngineError) -> Self {
        Self::Engine(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub kind: ScenarioKind,
    pub result: SimulationResult,
    pub verdict: Option<Verdict>,
    pub killer: Option<AgentId>,
    pub outcome: Option<String>,
}

impl RunReport {
    pub fn summary(&self) -> SummaryRecord {
        SummaryRecord {
            termination: self.result.termination,
            final_prompt_tokens: self.result.final_prompt_tokens,
            outcome: self.outcome.clone(),
        }
    }

    pub fn render(&self) -> String {
        render_report(
            Some(self.kind),
            self.result.transcript.len(),
            &self.summary(),
        )
    }
}

pub fn render_report(kind: Option<ScenarioKind>, turns: usize, summary: &SummaryRecord) -> String {
    let mut out = String::new();
    if let Some(kind) = kind {
        let name = match kind {
            ScenarioKind::OneToOne => "one_to_one",
            ScenarioKind::OneToMany => "one_to_many",
        };
        let _ = writeln!(out, "Scenario: {name}");
    }
    let _ = writeln!(out, "Turns: {turns}");
    let _ = writeln!(out, "Termination: {}", summary.termination.as_str());
    let _ = writeln!(
        out,
        "Outcome: {}",
        summary.outcome.as_deref().unwrap_or("none")
    );
    let _ = writeln!(out, "Final Prompt Token: {}", summary.final_prompt_tokens);
    out
}

fn verdict_outcome(verdict: &Verdict, killer: Option<&AgentId>) -> String {
    let accused = verdict.accused.as_ref().map_or("none", AgentId::as_str);
    match killer {
        Some(k) => format!(
            "accused={accused}, killer={k}, correct={}",
            verdict.accused.as_ref() == Some(k)
        ),
        None => format!("accused={accused}"),
    }
}

/// Runs the scenario. When `out` is given it receives the `scenario` header,
/// every turn as it is produced, and the summary. `interjector` replaces the
/// configured closing question of a one_to_many run.
pub fn run_scenario(
    config: &ScenarioConfig,
    resolved: &ResolvedScenario,
    backend: &dyn ChatBackend,
    interjector: Option<&mut dyn Interjector>,
    out: Option<&mut dyn Write>,
) -> Result<RunReport, RunError> {
    let mut writer = out.map(JsonlWriter::new);
    if let Some(w) = writer.as_mut() {
        w.write_record(&Record::Scenario {
            config: Box::new(config.clone()),
        })?;
    }
    let mut engine = Engine::new(backend).with_settings(resolved.request.clone());
    if let Some(w) = writer.as_mut() {
        engine = engine.with_sink(w);
    }
    let report = match &resolved.scenario {
        Scenario::OneToOne(spec) => {
            let result = engine.run_one_to_one(spec)?;
            let outcome = extract_deal(&result.transcript).to_string();
            RunReport {
                kind: ScenarioKind::OneToOne,
                result,
                verdict: None,
                killer: None,
                outcome: Some(outcome),
            }
        }
        Scenario::OneToMany { spec, killer, .. } => {
            let mut fixed = FixedQuestion(spec.final_question.clone());
            let interjector = match interjector {
                Some(i) => i,
                None => &mut fixed,
            };
            let (result, verdict) = engine.run_one_to_many_with(spec, interjector)?;
            let outcome = verdict
                .as_ref()
                .map(|v| verdict_outcome(v, killer.as_ref()));
            RunReport {
                kind: ScenarioKind::OneToMany,
                result,
                verdict,
                killer: killer.clone(),
                outcome,
            }
        }
    };
    drop(engine);
    if let Some(w) = writer {
        JsonlWriter::new(w.finish()?).write_record(&Record::Summary(report.summary()))?;
    }
    Ok(report)
}

/// Reads one question from `input`, prompting on `output`. End of input or a
/// blank line skips the question.
pub struct PromptInterjector<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> PromptInterjector<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl<R: BufRead, W: Write> Interjector for PromptInterjector<R, W> {
    fn ask(&mut self) -> Option<String> {
        let _ = write!(self.output, "Your question for the hub (blank to skip): ");
        let _ = self.output.flush();
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => {
                let question = line.trim_end_matches(['\r', '\n']).trim();
                (!question.is_empty()).then(|| question.to_string())
            }
        }
    }

    fn answered(&mut self, answer: &str) {
        let _ = writeln!(self.output, "Answer: {answer}");
    }
}

/// Wraps the replay mock so that a run which originally ended on a
/// backend-side context rejection ends the same way.
struct ReplayBackend {
    mock: ScriptedMock,
    rejected_at_end: bool,
}

impl ChatBackend for ReplayBackend {
    fn complete(
        &self,
        agent: &AgentId,
        request: &ChatRequest,
    ) -> Result<ChatResponse, BackendError> {
        match self.mock.complete(agent, request) {
            Err(BackendError::ScriptExhausted) if self.rejected_at_end => Err(
                BackendError::BudgetRejected("replayed context rejection".into()),
            ),
            other => other,
        }
    }
}

fn structure(line: usize, message: impl Into<String>) -> RunError {
    RunError::Transcript(TranscriptError::Structure {
        line,
        message: message.into(),
    })
}

/// Builds the strict replay script: one entry per backend-produced turn,
/// with the recorded usage and the last user message that call must see.
pub fn replay_script(
    file: &TranscriptFile,
    scenario: &Scenario,
) -> Result<Vec<ScriptEntry>, RunError> {
    let header = usize::from(file.config.is_some());
    let hub = match scenario {
        Scenario::OneToOne(_) => None,
        Scenario::OneToMany { spec, .. } => Some(spec.hub.agent.as_str()),
    };
    let mut script = Vec::new();
    for (i, turn) in file.turns.iter().enumerate() {
        let Some(prompt_tokens) = turn.prompt_tokens else {
            continue;
        };
        let speaker = AgentId::new(turn.speaker.as_str())
            .map_err(|e| structure(header + i + 1, e.to_string()))?;
        let earlier = file.turns[..i].iter().rev();
        let expected = match hub {
            None => file.turns[..i].last(),
            Some(hub) if turn.speaker == hub => earlier
                .clone()
                .find(|t| t.speaker == MEMORY_STREAM || t.speaker == HUMAN),
            Some(hub) => earlier.clone().find(|t| t.speaker == hub),
        };
        script.push(ScriptEntry {
            speaker,
            content: turn.content.clone(),
            prompt_tokens: Some(prompt_tokens),
            completion_tokens: turn.completion_tokens,
            expect_prefix: expected.map(|t| t.content.clone()),
        });
    }
    Ok(script)
}

/// Re-runs a persisted transcript through a strict mock built from its own
/// turns and returns the bytes of the regenerated transcript file.
pub fn replay(file: &TranscriptFile) -> Result<Vec<u8>, RunError> {
    let config = file
        .config
        .as_ref()
        .ok_or_else(|| structure(1, "replay needs a scenario header"))?;
    let resolved = config.resolve(std::path::Path::new("."))?;
    let backend = ReplayBackend {
        mock: ScriptedMock::new(replay_script(file, &resolved.scenario)?),
        rejected_at_end: file.summary.termination == Termination::BudgetExhausted,
    };
    let human = file
        .turns
        .iter()
        .find(|t| t.speaker == HUMAN)
        .map(|t| t.content.clone());
    let mut question = FixedQuestion(human);
    let mut out = Vec::new();
    run_scenario(
        config,
        &resolved,
        &backend,
        Some(&mut question),
        Some(&mut out),
    )?;
    Ok(out)
}

/// 1-based line number of the first difference, `None` when identical.
pub fn first_difference(a: &[u8], b: &[u8]) -> Option<usize> {
    if a == b {
        return None;
    }
    let mut lines_a = a.split(|&c| c == b'\n');
    let mut lines_b = b.split(|&c| c == b'\n');
    let mut line = 1;
    loop {
        match (lines_a.next(), lines_b.next()) {
            (Some(x), Some(y)) if x == y => line += 1,
            _ => return Some(line),
        }
    }
}
