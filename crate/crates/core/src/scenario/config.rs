//! Scenario configuration files.
//!
//! A scenario is one JSON object. `kind` selects the topology; the remaining
//! keys are checked against it in [`ScenarioConfig::resolve`], and every
//! validation error names the offending key.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::http::DEFAULT_BASE_URL;
use crate::backend::{DEFAULT_MODEL, DEFAULT_TEMPERATURE};
use crate::engine::{
    OneToManySpec, OneToOneSpec, RequestSettings, DEFAULT_MAX_TURNS, DEFAULT_ROUNDS,
};
use crate::model::{AgentId, Persona};
use crate::persona::{aligned_cast, generate_cast, AttributePool, Cast, CAPTAIN};
use crate::tokens::TokenBudget;

const DEFAULT_PASSENGERS: usize = 5;

#[derive(Debug)]
pub enum ConfigError {
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    Parse(serde_json::Error),
    Invalid {
        field: String,
        message: String,
    },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Read { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            Self::Parse(err) => write!(f, "invalid config JSON: {err}"),
            Self::Invalid { field, message } => write!(f, "config field `{field}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Read { source, .. } => Some(source),
            Self::Parse(err) => Some(err),
            Self::Invalid { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    OneToOne,
    OneToMany,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaConfig {
    pub agent: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSettings {
    /// Omitted: the built-in default pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<AttributePool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_passengers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// `false` zips the pool lists in order instead of sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle: Option<bool>,
    /// Forces the killer by name (aligned casts only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_response_tokens: Option<u32>,
    /// Relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personas: Option<Vec<PersonaConfig>>,
    /// one_to_many with explicit personas: which persona is the hub.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hub: Option<String>,
    /// one_to_many with explicit personas: ground truth for the verdict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_speaker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_turns: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interactive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub share_stream_with_spokes: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<TokenBudget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendSettings>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mock_script: Option<String>,
    pub seed: Option<u64>,
    pub max_prompt_tokens: Option<u64>,
}

#[derive(Debug, Clone)]
pub enum Scenario {
    OneToOne(OneToOneSpec),
    OneToMany {
        spec: OneToManySpec,
        killer: Option<AgentId>,
        interactive: bool,
    },
}

#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub request: RequestSettings,
    pub base_url: String,
    pub mock_script: Option<PathBuf>,
}

fn agent_id(field: &str, name: &str) -> Result<AgentId, ConfigError> {
    AgentId::new(name).map_err(|e| ConfigError::invalid(field, e.to_string()))
}

fn required<'c, T>(value: &'c Option<T>, field: &str, kind: &str) -> Result<&'c T, ConfigError> {
    value
        .as_ref()
        .ok_or_else(|| ConfigError::invalid(field, format!("required for {kind}")))
}

fn nonempty(value: &str, field: &str) -> Result<(), ConfigError> {
    if value.is_empty() {
        return Err(ConfigError::invalid(field, "must not be empty"));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(ConfigError::Parse)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, overrides: &Overrides) -> Result<(), ConfigError> {
        if let Some(script) = &overrides.mock_script {
            self.backend
                .get_or_insert_with(Default::default)
                .mock_script = Some(script.clone());
        }
        if let Some(seed) = overrides.seed {
            match self.generator.as_mut() {
                Some(generator) => generator.seed = seed,
                None => {
                    return Err(ConfigError::invalid(
                        "generator",
                        "--seed needs generator settings",
                    ))
                }
            }
        }
        if let Some(max) = overrides.max_prompt_tokens {
            let budget = TokenBudget::new(max)
                .map_err(|e| ConfigError::invalid("budget.max_prompt_tokens", e.to_string()))?;
            self.budget = Some(budget);
        }
        Ok(())
    }

    fn personas(&self) -> Result<Vec<Persona>, ConfigError> {
        let raw = self.personas.as_deref().unwrap_or_default();
        raw.iter()
            .enumerate()
            .map(|(i, p)| {
                let id = agent_id(&format!("personas[{i}].agent"), &p.agent)?;
                nonempty(&p.text, &format!("personas[{i}].text"))?;
                Ok(Persona::new(id, p.text.clone()).expect("checked nonempty"))
            })
            .collect()
    }

    fn reject_present(&self, fields: &[(&str, bool)], kind: &str) -> Result<(), ConfigError> {
        match fields.iter().find(|(_, present)| *present) {
            Some((field, _)) => Err(ConfigError::invalid(*field, format!("not used by {kind}"))),
            None => Ok(()),
        }
    }

    /// Checks the config against its `kind` and builds the simulation spec.
    /// `base_dir` anchors a relative `backend.mock_script`.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedScenario, ConfigError> {
        let backend = self.backend.clone().unwrap_or_default();
        let temperature = backend.temperature.unwrap_or(DEFAULT_TEMPERATURE);
        if !(0.0..=2.0).contains(&temperature) {
            return Err(ConfigError::invalid(
                "backend.temperature",
                "must be within [0, 2]",
            ));
        }
        if backend.max_response_tokens == Some(0) {
            return Err(ConfigError::invalid(
                "backend.max_response_tokens",
                "must be positive",
            ));
        }
        let model = backend
            .model
            .clone()
            .unwrap_or_else(|| DEFAULT_MODEL.to_string());
        nonempty(&model, "backend.model")?;
        let request = RequestSettings {
            model,
            temperature,
            max_response_tokens: backend.max_response_tokens,
        };
        let budget = self.budget.unwrap_or_default();

        let scenario = match self.kind {
            ScenarioKind::OneToOne => self.resolve_one_to_one(budget)?,
            ScenarioKind::OneToMany => self.resolve_one_to_many(budget)?,
        };
        Ok(ResolvedScenario {
            scenario,
            request,
            base_url: backend
                .base_url
                .unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
            mock_script: backend.mock_script.map(|p| base_dir.join(p)),
        })
    }

    fn resolve_one_to_one(&self, budget: TokenBudget) -> Result<Scenario, ConfigError> {
        const KIND: &str = "one_to_one";
        self.reject_present(
            &[
                ("generator", self.generator.is_some()),
                ("hub", self.hub.is_some()),
                ("killer", self.killer.is_some()),
                ("seed_question", self.seed_question.is_some()),
                ("rounds", self.rounds.is_some()),
                ("final_question", self.final_question.is_some()),
                ("interactive", self.interactive.is_some()),
                (
                    "share_stream_with_spokes",
                    self.share_stream_with_spokes.is_some(),
                ),
            ],
            KIND,
        )?;
        required(&self.personas, "personas", KIND)?;
        let personas = self.personas()?;
        if personas.len() != 2 {
            return Err(ConfigError::invalid(
                "personas",
                format!("{KIND} needs exactly 2 personas, got {}", personas.len()),
            ));
        }
        if personas[0].agent == personas[1].agent {
            return Err(ConfigError::invalid("personas", "agent names must differ"));
        }
        let seed_speaker = agent_id(
            "seed_speaker",
            required(&self.seed_speaker, "seed_speaker", KIND)?,
        )?;
        if !personas.iter().any(|p| p.agent == seed_speaker) {
            return Err(ConfigError::invalid(
                "seed_speaker",
                "must name one of the personas",
            ));
        }
        let seed_message = required(&self.seed_message, "seed_message", KIND)?;
        nonempty(seed_message, "seed_message")?;
        let max_turns = self.max_turns.unwrap_or(DEFAULT_MAX_TURNS);
        if max_turns == 0 {
            return Err(ConfigError::invalid("max_turns", "must be positive"));
        }
        let mut personas = personas.into_iter();
        Ok(Scenario::OneToOne(OneToOneSpec {
            agent_a: personas.next().expect("two personas"),
            agent_b: personas.next().expect("two personas"),
            seed_speaker,
            seed_message: seed_message.clone(),
            budget,
            max_turns,
        }))
    }

    fn resolve_one_to_many(&self, budget: TokenBudget) -> Result<Scenario, ConfigError> {
        const KIND: &str = "one_to_many";
        self.reject_present(
            &[
                ("seed_speaker", self.seed_speaker.is_some()),
                ("seed_message", self.seed_message.is_some()),
                ("max_turns", self.max_turns.is_some()),
            ],
            KIND,
        )?;
        let (hub, spokes, killer) = match (&self.personas, &self.generator) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(ConfigError::invalid(
                    "personas",
                    "one_to_many needs exactly one of `personas` or `generator`",
                ))
            }
            (Some(_), None) => self.explicit_cast()?,
            (None, Some(generator)) => {
                self.reject_present(
                    &[
                        ("hub", self.hub.is_some()),
                        ("killer", self.killer.is_some()),
                    ],
                    "generated casts",
                )?;
                let cast = build_cast(generator)?;
                (cast.captain, cast.passengers, Some(cast.killer))
            }
        };
        let seed_question = required(&self.seed_question, "seed_question", KIND)?;
        nonempty(seed_question, "seed_question")?;
        let rounds = self.rounds.unwrap_or(DEFAULT_ROUNDS);
        let interactive = self.interactive.unwrap_or(false);
        if interactive && self.final_question.is_some() {
            return Err(ConfigError::invalid(
                "final_question",
                "cannot be combined with `interactive: true`",
            ));
        }
        if let Some(q) = &self.final_question {
            nonempty(q, "final_question")?;
        }
        let spec = OneToManySpec {
            hub,
            spokes,
            seed_question: seed_question.clone(),
            rounds,
            final_question: self.final_question.clone(),
            budget,
            share_stream_with_spokes: self.share_stream_with_spokes.unwrap_or(false),
        };
        spec.validate()
            .map_err(|e| ConfigError::invalid("personas", e.to_string()))?;
        Ok(Scenario::OneToMany {
            spec,
            killer,
            interactive,
        })
    }

    fn explicit_cast(&self) -> Result<(Persona, Vec<Persona>, Option<AgentId>), ConfigError> {
        let mut personas = self.personas()?;
        if personas.len() < 2 {
            return Err(ConfigError::invalid(
                "personas",
                "one_to_many needs a hub and at least one spoke",
            ));
        }
        let hub_name = required(&self.hub, "hub", "one_to_many with explicit personas")?;
        let hub_pos = personas
            .iter()
            .position(|p| p.agent == hub_name.as_str())
            .ok_or_else(|| ConfigError::invalid("hub", format!("no persona named {hub_name:?}")))?;
        let hub = personas.remove(hub_pos);
        let killer = match &self.killer {
            Some(name) if !personas.iter().any(|p| p.agent == name.as_str()) => {
                return Err(ConfigError::invalid(
                    "killer",
                    format!("{name:?} is not a spoke"),
                ))
            }
            Some(name) => Some(agent_id("killer", name)?),
            None => None,
        };
        Ok((hub, personas, killer))
    }
}

fn build_cast(generator: &GeneratorSettings) -> Result<Cast, ConfigError> {
    let default_pool;
    let pool = match &generator.pool {
        Some(pool) => pool,
        None => {
            default_pool = AttributePool::default();
            &default_pool
        }
    };
    let n = generator.n_passengers.unwrap_or(DEFAULT_PASSENGERS);
    let shuffle = generator.shuffle.unwrap_or(true);
    let cast = if shuffle {
        if generator.killer.is_some() {
            return Err(ConfigError::invalid(
                "generator.killer",
                "only valid with `shuffle: false`",
            ));
        }
        generate_cast(pool, n, generator.seed)
    } else {
        aligned_cast(pool, n, generator.killer.as_deref(), generator.seed)
    };
    let cast = cast.map_err(|e| ConfigError::invalid("generator", e.to_string()))?;
    if cast.passengers.iter().any(|p| p.agent == CAPTAIN) {
        return Err(ConfigError::invalid(
            "generator.pool.names",
            format!("{CAPTAIN:?} is reserved"),
        ));
    }
    Ok(cast)
}
