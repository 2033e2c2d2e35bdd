//! Outcome extraction from finished transcripts.
//!
//! Both functions are plain text heuristics. They are reported next to the
//! raw transcript and never replace it.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;

use crate::model::{AgentId, Transcript};

static AGREEMENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:deal|agree\w*|accept\w*)\b").unwrap());
static REFUSAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:no deal|cannot accept|walk away)\b").unwrap());
static AMOUNT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([$€£¥])\s?(\d{1,3}(?:,\d{3})+|\d+)(\.\d+)?").unwrap());

#[derive(Debug, Clone, PartialEq)]
pub enum DealOutcome {
    AgreedPrice { amount: f64, currency: String },
    NoDeal,
    Undetermined,
}

impl fmt::Display for DealOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AgreedPrice { amount, currency } if amount.fract() == 0.0 => {
                write!(f, "Sold for {currency}{amount:.0}")
            }
            Self::AgreedPrice { amount, currency } => write!(f, "Sold for {currency}{amount:.2}"),
            Self::NoDeal => f.write_str("No deal"),
            Self::Undetermined => f.write_str("Undetermined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Agreement,
    Refusal,
}

/// The marker occurring last in `text`. Agreement words inside a refusal
/// phrase ("no deal", "cannot accept") do not count as agreement.
fn last_marker(text: &str) -> Option<Marker> {
    let refusals: Vec<_> = REFUSAL.find_iter(text).map(|m| m.range()).collect();
    let last_refusal = refusals.last().map(|r| r.start);
    let last_agreement = AGREEMENT
        .find_iter(text)
        .filter(|m| {
            !refusals
                .iter()
                .any(|r| r.start <= m.start() && m.end() <= r.end)
        })
        .last()
        .map(|m| m.start());
    match (last_agreement, last_refusal) {
        (None, None) => None,
        (Some(_), None) => Some(Marker::Agreement),
        (None, Some(_)) => Some(Marker::Refusal),
        (Some(a), Some(r)) => Some(if a > r {
            Marker::Agreement
        } else {
            Marker::Refusal
        }),
    }
}

fn last_amount(text: &str) -> Option<(f64, String)> {
    let caps = AMOUNT.captures_iter(text).last()?;
    let digits = caps[2].replace(',', "");
    let number = format!("{digits}{}", caps.get(3).map_or("", |m| m.as_str()));
    Some((number.parse().ok()?, caps[1].to_string()))
}

/// Decides the negotiation outcome from the most recent turn that carries an
/// agreement or refusal marker. On agreement, the price is the last currency
/// amount mentioned in that turn or, failing that, in earlier turns.
pub fn extract_deal(transcript: &Transcript) -> DealOutcome {
    let turns = transcript.turns();
    for (i, turn) in turns.iter().enumerate().rev() {
        match last_marker(&turn.content) {
            None => continue,
            Some(Marker::Refusal) => return DealOutcome::NoDeal,
            Some(Marker::Agreement) => {
                return turns[..=i]
                    .iter()
                    .rev()
                    .find_map(|t| last_amount(&t.content))
                    .map_or(DealOutcome::Undetermined, |(amount, currency)| {
                        DealOutcome::AgreedPrice { amount, currency }
                    });
            }
        }
    }
    DealOutcome::Undetermined
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub accused: Option<AgentId>,
    pub raw_answer: String,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Byte offset of the first whole-word, case-sensitive occurrence of `name`.
fn first_mention(text: &str, name: &str) -> Option<usize> {
    text.match_indices(name).map(|(pos, _)| pos).find(|&pos| {
        let before = text[..pos].chars().next_back();
        let after = text[pos + name.len()..].chars().next();
        !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
    })
}

/// Accuses the spoke named earliest in `answer`.
pub fn judge_verdict(answer: &str, spokes: &[AgentId]) -> Verdict {
    let accused = spokes
        .iter()
        .filter_map(|s| first_mention(answer, s.as_str()).map(|pos| (pos, s)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, s)| s.clone());
    Verdict {
        accused,
        raw_answer: answer.to_string(),
    }
}
