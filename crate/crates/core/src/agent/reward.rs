use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::state::UnifiedRaceState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub points: [f64; 10],
    pub terminal_multiplier: f64,
    pub step: f64,
    pub extra_pit: f64,
    pub failure: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            points: [25.0, 18.0, 15.0, 12.0, 10.0, 8.0, 6.0, 4.0, 2.0, 1.0],
            terminal_multiplier: 100.0,
            step: 1.0,
            extra_pit: -10.0,
            failure: -1000.0,
        }
    }
}

impl RewardSpec {
    /// First matching case wins, in this order: pit onto an unavailable
    /// compound, terminal without a valid finish, pit after the finish is
    /// already valid, points finish, pointless finish, ordinary lap.
    pub fn evaluate(
        &self,
        prev: &UnifiedRaceState,
        action: Action,
        next: &UnifiedRaceState,
    ) -> f64 {
        if let Some(c) = action.compound() {
            if !prev.available(c) {
                return self.failure;
            }
        }
        if next.terminal && !next.valid_finish {
            return self.failure;
        }
        if action.is_pit() && prev.valid_finish {
            return self.extra_pit;
        }
        if next.terminal {
            return match next.position {
                p @ 1..=10 => self.terminal_multiplier * self.points[p - 1],
                _ => 0.0,
            };
        }
        self.step
    }

    pub fn max_terminal(&self) -> f64 {
        self.terminal_multiplier * self.points[0]
    }
}

pub fn reward(prev: &UnifiedRaceState, action: Action, next: &UnifiedRaceState) -> f64 {
    RewardSpec::default().evaluate(prev, action, next)
}
