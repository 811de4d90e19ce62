use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Dry tyre compounds, softest first. The index order is frozen: it is used
/// for one-hot encodings and per-compound arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Compound {
    Soft,
    Medium,
    Hard,
}

impl Compound {
    pub const ALL: [Compound; 3] = [Compound::Soft, Compound::Medium, Compound::Hard];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Compound> {
        Self::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        match self {
            Compound::Soft => 'S',
            Compound::Medium => 'M',
            Compound::Hard => 'H',
        }
    }

    pub fn from_letter(c: char) -> Option<Compound> {
        match c {
            'S' => Some(Compound::Soft),
            'M' => Some(Compound::Medium),
            'H' => Some(Compound::Hard),
            _ => None,
        }
    }
}

impl fmt::Display for Compound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Compound::Soft => "Soft",
            Compound::Medium => "Medium",
            Compound::Hard => "Hard",
        };
        f.write_str(name)
    }
}

/// Safety-car status. One-hot order is Full, Virtual, None.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum SafetyCar {
    Full,
    Virtual,
    #[default]
    None,
}

impl SafetyCar {
    pub const ALL: [SafetyCar; 3] = [SafetyCar::Full, SafetyCar::Virtual, SafetyCar::None];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_deployed(self) -> bool {
        self != SafetyCar::None
    }
}

impl fmt::Display for SafetyCar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SafetyCar::Full => "Full",
            SafetyCar::Virtual => "Virtual",
            SafetyCar::None => "None",
        };
        f.write_str(name)
    }
}

macro_rules! tracks {
    ($($id:ident => $name:literal),* $(,)?) => {
        /// Supported circuits. Declaration order fixes the one-hot layout.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum TrackId {
            $($id,)*
        }

        impl TrackId {
            pub const ALL: [TrackId; 14] = [$(TrackId::$id,)*];

            pub fn code(self) -> &'static str {
                match self {
                    $(TrackId::$id => stringify!($id),)*
                }
            }

            pub fn name(self) -> &'static str {
                match self {
                    $(TrackId::$id => $name,)*
                }
            }
        }

        impl FromStr for TrackId {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                match s.trim().to_ascii_uppercase().as_str() {
                    $(stringify!($id) => Ok(TrackId::$id),)*
                    _ => Err(Error::UnknownTrack(s.to_string())),
                }
            }
        }
    };
}

tracks! {
    JPN => "Japan",
    BHR => "Bahrain",
    AZE => "Azerbaijan",
    GBR => "Great Britain",
    HUN => "Hungary",
    ITA => "Italy",
    SGP => "Singapore",
    QAT => "Qatar",
    ABU => "Abu Dhabi",
    SPN => "Spain",
    SAU => "Saudi Arabia",
    AUT => "Austria",
    MEX => "Mexico",
    USA => "USA",
}

impl TrackId {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A value per dry compound.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerCompound<T> {
    pub soft: T,
    pub medium: T,
    pub hard: T,
}

impl<T: Copy> PerCompound<T> {
    pub fn new(soft: T, medium: T, hard: T) -> Self {
        PerCompound { soft, medium, hard }
    }

    pub fn get(&self, c: Compound) -> T {
        match c {
            Compound::Soft => self.soft,
            Compound::Medium => self.medium,
            Compound::Hard => self.hard,
        }
    }

    pub fn get_mut(&mut self, c: Compound) -> &mut T {
        match c {
            Compound::Soft => &mut self.soft,
            Compound::Medium => &mut self.medium,
            Compound::Hard => &mut self.hard,
        }
    }

    pub fn to_array(&self) -> [T; 3] {
        [self.soft, self.medium, self.hard]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn track_codes_round_trip() {
        for t in TrackId::ALL {
            assert_eq!(t.code().parse::<TrackId>().unwrap(), t);
        }
        assert!("XYZ".parse::<TrackId>().is_err());
        assert_eq!(TrackId::BHR.index(), 1);
    }

    #[test]
    fn compound_letters() {
        for c in Compound::ALL {
            assert_eq!(Compound::from_letter(c.letter()), Some(c));
        }
        assert_eq!(Compound::from_letter('W'), None);
    }
}
