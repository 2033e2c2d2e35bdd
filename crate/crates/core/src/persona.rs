//! Murder-mystery cast generation.
//!
//! Passengers are drawn from an [`AttributePool`] by sampling every attribute
//! dimension without replacement, so no two passengers share a value. One
//! passenger is then picked as the killer and the captain's eyewitness brief
//! is filled with the killer's four clue attributes (clothing, location,
//! hobby, fact). Because clue values are unique, exactly one passenger
//! matches the brief.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, ModelError, Persona};

pub const CAPTAIN: &str = "Captain";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PersonaError {
    #[error("pool dimension `{dimension}` has {available} values, need {needed}")]
    PoolTooSmall {
        dimension: &'static str,
        available: usize,
        needed: usize,
    },
    #[error("pool dimension `{dimension}` repeats value {value:?}")]
    DuplicateValue {
        dimension: &'static str,
        value: String,
    },
    #[error("template slot `{0}` is empty")]
    EmptySlot(&'static str),
    #[error("a cast needs at least one passenger")]
    NoPassengers,
    #[error("a cast needs exactly one killer, found {0}")]
    KillerCount(usize),
    #[error("no passenger named {0:?} to make the killer")]
    UnknownKiller(String),
    #[error("passengers share the {dimension} value {value:?}")]
    SharedClue {
        dimension: &'static str,
        value: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributePool {
    pub names: Vec<String>,
    pub personalities: Vec<String>,
    pub occupations: Vec<String>,
    pub hobbies: Vec<String>,
    pub facts: Vec<String>,
    pub clothing_items: Vec<String>,
    pub ship_locations: Vec<String>,
}

fn strings(values: &[&str]) -> Vec<String> {
    values.iter().map(|s| s.to_string()).collect()
}

impl Default for AttributePool {
    /// Entry `i` of every list belongs together for the first five entries,
    /// giving the reference cast (Bob, Nancy, Max, Chris, Susan) when taken
    /// in order with [`AttributePool::aligned_profiles`].
    fn default() -> Self {
        Self {
            names: strings(&[
                "Bob", "Nancy", "Max", "Chris", "Susan", "Linda", "Oscar", "Priya",
            ]),
            personalities: strings(&[
                "humorous",
                "cheerful",
                "curious",
                "playful",
                "reserved",
                "grumpy",
                "nervous",
                "talkative",
            ]),
            occupations: strings(&[
                "Data Science instructor",
                "Data Scientist",
                "Medical Researcher",
                "Video Game Tester",
                "Software Engineer",
                "Pastry Chef",
                "Marine Biologist",
                "Librarian",
            ]),
            hobbies: strings(&[
                "teaching",
                "gardening",
                "reading",
                "playing video games",
                "traveling",
                "painting",
                "birdwatching",
                "chess",
            ]),
            facts: strings(&[
                "ethnically Polish",
                "a student",
                "fluent in German",
                "nearsighted",
                "a Tesla owner",
                "a former swimmer",
                "left-handed",
                "afraid of heights",
            ]),
            clothing_items: strings(&[
                "collared shirt",
                "dress",
                "lab coat",
                "pair of glasses",
                "sweater",
                "tuxedo",
                "raincoat",
                "baseball cap",
            ]),
            ship_locations: strings(&[
                "lounge", "cabin", "deck", "arcade", "library", "casino", "spa", "buffet",
            ]),
        }
    }
}

impl AttributePool {
    fn dimensions(&self) -> [(&'static str, &[String]); 7] {
        [
            ("names", &self.names),
            ("personalities", &self.personalities),
            ("occupations", &self.occupations),
            ("hobbies", &self.hobbies),
            ("facts", &self.facts),
            ("clothing_items", &self.clothing_items),
            ("ship_locations", &self.ship_locations),
        ]
    }

    pub fn validate(&self, n_passengers: usize) -> Result<(), PersonaError> {
        if n_passengers == 0 {
            return Err(PersonaError::NoPassengers);
        }
        for (dimension, values) in self.dimensions() {
            if values.len() < n_passengers {
                return Err(PersonaError::PoolTooSmall {
                    dimension,
                    available: values.len(),
                    needed: n_passengers,
                });
            }
            for (i, value) in values.iter().enumerate() {
                if value.is_empty() {
                    return Err(PersonaError::EmptySlot(dimension));
                }
                if values[..i].contains(value) {
                    return Err(PersonaError::DuplicateValue {
                        dimension,
                        value: value.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// The first `n` entries of every list, zipped in order. No passenger is
    /// marked as the killer.
    pub fn aligned_profiles(&self, n: usize) -> Result<Vec<PassengerProfile>, PersonaError> {
        self.validate(n)?;
        Ok((0..n).map(|i| self.profile_at([i; 7])).collect())
    }

    fn profile_at(&self, idx: [usize; 7]) -> PassengerProfile {
        PassengerProfile {
            name: self.names[idx[0]].clone(),
            personality: self.personalities[idx[1]].clone(),
            occupation: self.occupations[idx[2]].clone(),
            hobby: self.hobbies[idx[3]].clone(),
            fact: self.facts[idx[4]].clone(),
            clothing: self.clothing_items[idx[5]].clone(),
            location: self.ship_locations[idx[6]].clone(),
            is_killer: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassengerProfile {
    pub name: String,
    pub personality: String,
    pub occupation: String,
    pub hobby: String,
    pub fact: String,
    pub clothing: String,
    pub location: String,
    pub is_killer: bool,
}

impl PassengerProfile {
    /// Whether this passenger fits every clue of the eyewitness brief.
    pub fn matches(&self, brief: &CaptainBrief) -> bool {
        self.clothing == brief.clothing_clue
            && self.location == brief.location_clue
            && self.hobby == brief.hobby_clue
            && self.fact == brief.fact_clue
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptainBrief {
    pub clothing_clue: String,
    pub location_clue: String,
    pub hobby_clue: String,
    pub fact_clue: String,
}

impl CaptainBrief {
    pub fn from_killer(killer: &PassengerProfile) -> Self {
        Self {
            clothing_clue: killer.clothing.clone(),
            location_clue: killer.location.clone(),
            hobby_clue: killer.hobby.clone(),
            fact_clue: killer.fact.clone(),
        }
    }
}

fn slot<'s>(name: &'static str, value: &'s str) -> Result<&'s str, PersonaError> {
    if value.is_empty() {
        Err(PersonaError::EmptySlot(name))
    } else {
        Ok(value)
    }
}

const PASSENGER_OBJECTIVE: &str = "Help identify the killer. Please be concise in your responses.";
const KILLER_OBJECTIVE: &str = "However, you are the killer. Mislead and lie to everyone to avoid getting caught. Please be concise in your responses.";

pub fn render_passenger(profile: &PassengerProfile) -> Result<String, PersonaError> {
    let objective = if profile.is_killer {
        KILLER_OBJECTIVE
    } else {
        PASSENGER_OBJECTIVE
    };
    Ok(format!(
        "Your name is {}, you are a {} person, and you work as a {}. In your free time, you enjoy {}. \
         A random fact is that you are {}. For this cruise, you packed a {} and your favorite part of \
         the ship is the {}. Someone was murdered on the cruise and the captain wants you to help \
         identify the killer. {objective}",
        slot("name", &profile.name)?,
        slot("personality", &profile.personality)?,
        slot("occupation", &profile.occupation)?,
        slot("hobby", &profile.hobby)?,
        slot("fact", &profile.fact)?,
        slot("clothing", &profile.clothing)?,
        slot("location", &profile.location)?,
    ))
}

/// The fact clue carries its own article ("a student"), as in the passenger
/// template's "you are {fact}".
pub fn render_captain(brief: &CaptainBrief) -> Result<String, PersonaError> {
    Ok(format!(
        "You are the captain. Someone was murdered on your ship. Interrogate the group to find out \
         who matches the eyewitness report. An eyewitness has reported that the killer was seen \
         wearing a {}, running from the {}. Additionally, several eyewitnesses overheard the killer \
         talking about {}. It was also heard that the killer is {}. Be brief in your responses, do \
         not reveal the eyewitness report, and ask questions to the group as a whole.",
        slot("clothing_clue", &brief.clothing_clue)?,
        slot("location_clue", &brief.location_clue)?,
        slot("hobby_clue", &brief.hobby_clue)?,
        slot("fact_clue", &brief.fact_clue)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cast {
    pub captain: Persona,
    pub passengers: Vec<Persona>,
    pub profiles: Vec<PassengerProfile>,
    pub brief: CaptainBrief,
    pub killer: AgentId,
}

impl Cast {
    /// Renders a cast from explicit profiles, exactly one of which must be
    /// the killer.
    pub fn from_profiles(profiles: Vec<PassengerProfile>) -> Result<Self, PersonaError> {
        if profiles.is_empty() {
            return Err(PersonaError::NoPassengers);
        }
        let killers: Vec<_> = profiles.iter().filter(|p| p.is_killer).collect();
        if killers.len() != 1 {
            return Err(PersonaError::KillerCount(killers.len()));
        }
        let killer_profile = killers[0];
        for (i, p) in profiles.iter().enumerate() {
            for q in &profiles[..i] {
                let shared = [
                    ("hobby", &p.hobby, &q.hobby),
                    ("fact", &p.fact, &q.fact),
                    ("clothing", &p.clothing, &q.clothing),
                    ("location", &p.location, &q.location),
                ]
                .into_iter()
                .find(|(_, a, b)| a == b);
                if let Some((dimension, value, _)) = shared {
                    return Err(PersonaError::SharedClue {
                        dimension,
                        value: value.clone(),
                    });
                }
            }
        }
        let brief = CaptainBrief::from_killer(killer_profile);
        let killer = AgentId::new(killer_profile.name.clone())?;
        let captain = Persona::new(AgentId::new(CAPTAIN)?, render_captain(&brief)?)?;
        let passengers = profiles
            .iter()
            .map(|p| {
                Ok(Persona::new(
                    AgentId::new(p.name.clone())?,
                    render_passenger(p)?,
                )?)
            })
            .collect::<Result<Vec<_>, PersonaError>>()?;
        Ok(Self {
            captain,
            passengers,
            profiles,
            brief,
            killer,
        })
    }

    /// Passengers fitting all four clues of the captain's brief.
    pub fn suspects_matching_brief(&self) -> Vec<&PassengerProfile> {
        self.profiles
            .iter()
            .filter(|p| p.matches(&self.brief))
            .collect()
    }
}

/// Samples `n_passengers` profiles without replacement on every dimension and
/// picks the killer uniformly, all from one generator seeded with `seed`.
/// The killer is drawn last.
pub fn generate_cast(
    pool: &AttributePool,
    n_passengers: usize,
    seed: u64,
) -> Result<Cast, PersonaError> {
    pool.validate(n_passengers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<Vec<usize>> = pool
        .dimensions()
        .iter()
        .map(|(_, values)| sample(&mut rng, values.len(), n_passengers).into_vec())
        .collect();
    let mut profiles: Vec<PassengerProfile> = (0..n_passengers)
        .map(|i| pool.profile_at(std::array::from_fn(|d| picks[d][i])))
        .collect();
    let killer = rng.random_range(0..n_passengers);
    profiles[killer].is_killer = true;
    Cast::from_profiles(profiles)
}

/// Renders the first `n_passengers` aligned profiles of `pool` with the
/// passenger named `killer` as the killer, or a seeded random one.
pub fn aligned_cast(
    pool: &AttributePool,
    n_passengers: usize,
    killer: Option<&str>,
    seed: u64,
) -> Result<Cast, PersonaError> {
    let mut profiles = pool.aligned_profiles(n_passengers)?;
    let index = match killer {
        Some(name) => profiles
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| PersonaError::UnknownKiller(name.to_string()))?,
        None => ChaCha8Rng::seed_from_u64(seed).random_range(0..n_passengers),
    };
    profiles[index].is_killer = true;
    Cast::from_profiles(profiles)
}
