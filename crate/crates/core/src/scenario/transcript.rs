//! JSONL transcript files.
//!
//! One record per line, tagged by `type`: an optional `scenario` header with
//! the resolved config, one `turn` per transcript turn in index order, and a
//! closing `summary`.

use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::engine::{Termination, TranscriptSink};
use crate::model::Turn;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub index: usize,
    pub speaker: String,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

impl From<&Turn> for TurnRecord {
    fn from(turn: &Turn) -> Self {
        Self {
            index: turn.index,
            speaker: turn.speaker.to_string(),
            content: turn.content.clone(),
            prompt_tokens: turn.prompt_tokens,
            completion_tokens: turn.completion_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub termination: Termination,
    pub final_prompt_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Scenario { config: Box<ScenarioConfig> },
    Turn(TurnRecord),
    Summary(SummaryRecord),
}

/// Writes records one line at a time, flushing after each, so a crashed run
/// leaves every completed turn on disk.
pub struct JsonlWriter<W: Write> {
    out: W,
    error: Option<io::Error>,
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, error: None }
    }

    pub fn write_record(&mut self, record: &Record) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        self.out.write_all(&line)?;
        self.out.flush()
    }

    /// Returns the writer, or the first error hit while used as a sink.
    pub fn finish(self) -> io::Result<W> {
        match self.error {
            Some(err) => Err(err),
            None => Ok(self.out),
        }
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

impl<W: Write> TranscriptSink for JsonlWriter<W> {
    fn on_turn(&mut self, turn: &Turn) {
        if self.error.is_some() {
            return;
        }
        if let Err(err) = self.write_record(&Record::Turn(turn.into())) {
            self.error = Some(err);
        }
    }
}

#[derive(Debug)]
pub enum TranscriptError {
    Io(io::Error),
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    Structure {
        line: usize,
        message: String,
    },
}

impl fmt::Display for TranscriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(err) => write!(f, "{err}"),
            Self::Parse { line, source } => write!(f, "line {line}: {source}"),
            Self::Structure { line, message } => write!(f, "line {line}: {message}"),
        }
    }
}

impl std::error::Error for TranscriptError {}

/// A parsed transcript file.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptFile {
    pub config: Option<ScenarioConfig>,
    pub turns: Vec<TurnRecord>,
    pub summary: SummaryRecord,
}

impl TranscriptFile {
    /// Parses and checks structure: header first if present, contiguous turn
    /// indices from 0, exactly one summary on the last line.
    pub fn read(reader: impl BufRead) -> Result<Self, TranscriptError> {
        let mut config = None;
        let mut turns: Vec<TurnRecord> = Vec::new();
        let mut summary = None;
        let mut last_line = 0;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(TranscriptError::Io)?;
            last_line = line_no;
            let structure = |message: &str| TranscriptError::Structure {
                line: line_no,
                message: message.to_string(),
            };
            if summary.is_some() {
                return Err(structure("record after summary"));
            }
            let record: Record =
                serde_json::from_str(&line).map_err(|source| TranscriptError::Parse {
                    line: line_no,
                    source,
                })?;
            match record {
                Record::Scenario { config: c } => {
                    if line_no != 1 {
                        return Err(structure("scenario header must be the first line"));
                    }
                    config = Some(*c);
                }
                Record::Turn(turn) => {
                    if turn.index != turns.len() {
                        return Err(structure(&format!(
                            "turn index {} out of sequence, expected {}",
                            turn.index,
                            turns.len()
                        )));
                    }
                    turns.push(turn);
                }
                Record::Summary(s) => summary = Some(s),
            }
        }
        let summary = summary.ok_or(TranscriptError::Structure {
            line: last_line,
            message: "missing summary record".into(),
        })?;
        Ok(Self {
            config,
            turns,
            summary,
        })
    }

    pub fn write(&self, out: impl Write) -> io::Result<()> {
        let mut writer = JsonlWriter::new(out);
        if let Some(config) = &self.config {
            writer.write_record(&Record::Scenario {
                config: Box::new(config.clone()),
            })?;
        }
        for turn in &self.turns {
            writer.write_record(&Record::Turn(turn.clone()))?;
        }
        writer.write_record(&Record::Summary(self.summary.clone()))
    }
}
