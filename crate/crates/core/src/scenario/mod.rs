//! Scenario files, transcript persistence, and the run/replay driver.

pub mod config;
pub mod runner;
pub mod transcript;

pub use config::{
    ConfigError, Overrides, ResolvedScenario, Scenario, ScenarioConfig, ScenarioKind,
};
pub use runner::{
    first_difference, render_report, replay, run_scenario, PromptInterjector, RunError, RunReport,
};
pub use transcript::{JsonlWriter, Record, SummaryRecord, TranscriptFile, TurnRecord};
