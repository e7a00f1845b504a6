use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// The character's behavior repertoire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Routine {
    IdleGazeWander,
    IdleDrum,
    Beckon,
    DistanceGuide,
    Mimic,
    Ponder,
    PromptGesture,
    Reward,
    Scold,
    Puzzled,
}

#[derive(Debug, Error)]
#[error("unknown routine {0:?}")]
pub struct UnknownRoutine(pub String);

impl Routine {
    pub const ALL: [Routine; 10] = [
        Routine::IdleGazeWander,
        Routine::IdleDrum,
        Routine::Beckon,
        Routine::DistanceGuide,
        Routine::Mimic,
        Routine::Ponder,
        Routine::PromptGesture,
        Routine::Reward,
        Routine::Scold,
        Routine::Puzzled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Routine::IdleGazeWander => "IdleGazeWander",
            Routine::IdleDrum => "IdleDrum",
            Routine::Beckon => "Beckon",
            Routine::DistanceGuide => "DistanceGuide",
            Routine::Mimic => "Mimic",
            Routine::Ponder => "Ponder",
            Routine::PromptGesture => "PromptGesture",
            Routine::Reward => "Reward",
            Routine::Scold => "Scold",
            Routine::Puzzled => "Puzzled",
        }
    }

    /// Contingent responses that the policy may never choose.
    pub fn is_reflex_only(self) -> bool {
        matches!(self, Routine::Reward | Routine::Scold | Routine::DistanceGuide)
    }

    /// Default policy action set: everything that is not reflex-only.
    pub fn default_selectable() -> Vec<Routine> {
        Routine::ALL.into_iter().filter(|r| !r.is_reflex_only()).collect()
    }
}

impl fmt::Display for Routine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Routine {
    type Err = UnknownRoutine;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Routine::ALL
            .into_iter()
            .find(|r| r.as_str() == s.trim())
            .ok_or_else(|| UnknownRoutine(s.to_string()))
    }
}
