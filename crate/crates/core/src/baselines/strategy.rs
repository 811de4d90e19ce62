//! Stint notation: compound letters separated by pit windows, for example
//! `S[10, 20]M` (soft, stop between laps 10 and 20, then medium) or
//! `M[3]S[44]H[46]M` (three stops on exact laps).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Compound;

/// Inclusive lap interval in which a stop happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PitWindow {
    pub first: u32,
    pub last: u32,
}

impl PitWindow {
    pub fn exact(lap: u32) -> Self {
        PitWindow {
            first: lap,
            last: lap,
        }
    }

    pub fn contains(&self, lap: u32) -> bool {
        (self.first..=self.last).contains(&lap)
    }
}

impl fmt::Display for PitWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.first == self.last {
            write!(f, "[{}]", self.first)
        } else {
            write!(f, "[{},{}]", self.first, self.last)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedStop {
    pub window: PitWindow,
    /// Compound fitted at this stop.
    pub compound: Compound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyPlan {
    pub start: Compound,
    pub stops: Vec<PlannedStop>,
}

impl StrategyPlan {
    /// Compound of every stint in order.
    pub fn stints(&self) -> Vec<Compound> {
        std::iter::once(self.start)
            .chain(self.stops.iter().map(|s| s.compound))
            .collect()
    }

    /// Draws one pit lap uniformly inside each window. Windows running past
    /// the final lap are clamped to it.
    pub fn draw_pits<R: Rng + ?Sized>(&self, total_laps: u32, rng: &mut R) -> Vec<(u32, Compound)> {
        self.stops
            .iter()
            .map(|stop| {
                let last = stop.window.last.min(total_laps);
                let first = stop.window.first.min(last);
                if last < stop.window.last {
                    log::warn!(
                        "pit window {} of {self} clamped to lap {total_laps}",
                        stop.window
                    );
                }
                (rng.random_range(first..=last), stop.compound)
            })
            .collect()
    }

    fn validate(&self, text: &str) -> Result<()> {
        let err = |reason: &str| {
            Err(Error::Strategy {
                text: text.to_string(),
                reason: reason.to_string(),
            })
        };
        if self.stops.is_empty() {
            return err("a strategy needs at least two stints");
        }
        let mut prev_last = 0;
        for stop in &self.stops {
            let w = stop.window;
            if w.first == 0 {
                return err("laps are numbered from 1");
            }
            if w.first > w.last {
                return err("pit window is inverted");
            }
            if w.first <= prev_last {
                return err("pit windows must be strictly increasing");
            }
            prev_last = w.last;
        }
        let mut used = self.stints();
        used.sort();
        used.dedup();
        if used.len() < 2 {
            return err("at least two distinct compounds are required");
        }
        Ok(())
    }
}

impl fmt::Display for StrategyPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start.letter())?;
        for stop in &self.stops {
            write!(f, "{}{}", stop.window, stop.compound.letter())?;
        }
        Ok(())
    }
}

struct Cursor<'a> {
    text: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::Strategy {
            text: self.text.to_string(),
            reason: reason.into(),
        })
    }

    fn compound(&mut self) -> Result<Compound> {
        self.skip_ws();
        match self.chars.next() {
            Some((_, c)) => match Compound::from_letter(c.to_ascii_uppercase()) {
                Some(comp) => Ok(comp),
                None => self.fail(format!("expected compound letter S, M or H, found `{c}`")),
            },
            None => self.fail("expected compound letter, found end of input"),
        }
    }

    fn number(&mut self) -> Result<Option<u32>> {
        self.skip_ws();
        let mut digits = String::new();
        while let Some(&(_, c)) = self.chars.peek() {
            if c.is_ascii_digit() {
                digits.push(c);
                self.chars.next();
            } else {
                break;
            }
        }
        if digits.is_empty() {
            return Ok(None);
        }
        match digits.parse() {
            Ok(n) => Ok(Some(n)),
            Err(_) => self.fail(format!("lap number `{digits}` out of range")),
        }
    }

    fn expect(&mut self, want: char) -> Result<()> {
        self.skip_ws();
        match self.chars.next() {
            Some((_, c)) if c == want => Ok(()),
            Some((_, c)) => self.fail(format!("expected `{want}`, found `{c}`")),
            None => self.fail(format!("expected `{want}`, found end of input")),
        }
    }

    fn window(&mut self) -> Result<PitWindow> {
        self.expect('[')?;
        let Some(first) = self.number()? else {
            self.skip_ws();
            return match self.chars.peek() {
                Some((_, ']')) => self.fail("empty pit window"),
                _ => self.fail("expected lap number in pit window"),
            };
        };
        self.skip_ws();
        let last = match self.chars.peek() {
            Some((_, ',')) => {
                self.chars.next();
                match self.number()? {
                    Some(n) => n,
                    None => return self.fail("expected second lap number after `,`"),
                }
            }
            _ => first,
        };
        self.expect(']')?;
        Ok(PitWindow { first, last })
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.chars.peek().is_none()
    }
}

pub fn parse_strategy(text: &str) -> Result<StrategyPlan> {
    let mut cur = Cursor {
        text,
        chars: text.char_indices().peekable(),
    };
    if cur.at_end() {
        return cur.fail("empty strategy");
    }
    let start = cur.compound()?;
    let mut stops = Vec::new();
    while !cur.at_end() {
        let window = cur.window()?;
        let compound = cur.compound()?;
        stops.push(PlannedStop { window, compound });
    }
    let plan = StrategyPlan { start, stops };
    plan.validate(text)?;
    Ok(plan)
}

impl FromStr for StrategyPlan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_strategy(s)
    }
}

/// Reads a strategy pool: one strategy per line, `#` comments and blank lines ignored.
pub fn parse_pool(text: &str) -> Result<Vec<StrategyPlan>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(parse_strategy)
        .collect()
}
