use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sim::Compound;

/// Per-lap strategy decision. Index order is frozen for the Q-value heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Action {
    #[default]
    NoPit,
    PitSoft,
    PitMedium,
    PitHard,
}

impl Action {
    pub const COUNT: usize = 4;
    pub const ALL: [Action; 4] = [
        Action::NoPit,
        Action::PitSoft,
        Action::PitMedium,
        Action::PitHard,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn pit(compound: Compound) -> Action {
        match compound {
            Compound::Soft => Action::PitSoft,
            Compound::Medium => Action::PitMedium,
            Compound::Hard => Action::PitHard,
        }
    }

    /// Compound requested by a pit action.
    pub fn compound(self) -> Option<Compound> {
        match self {
            Action::NoPit => None,
            Action::PitSoft => Some(Compound::Soft),
            Action::PitMedium => Some(Compound::Medium),
            Action::PitHard => Some(Compound::Hard),
        }
    }

    pub fn is_pit(self) -> bool {
        self != Action::NoPit
    }

    /// Two-letter code used in confusion matrices and CSV traces.
    pub fn code(self) -> &'static str {
        match self {
            Action::NoPit => "np",
            Action::PitSoft => "ps",
            Action::PitMedium => "pm",
            Action::PitHard => "ph",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::NoPit => "no pit",
            Action::PitSoft => "pit soft",
            Action::PitMedium => "pit medium",
            Action::PitHard => "pit hard",
        };
        f.write_str(s)
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "np" | "nopit" => Ok(Action::NoPit),
            "ps" | "pitsoft" => Ok(Action::PitSoft),
            "pm" | "pitmedium" => Ok(Action::PitMedium),
            "ph" | "pithard" => Ok(Action::PitHard),
            _ => Err(format!("unknown action `{s}`")),
        }
    }
}
