//! Rule-based pit wall. A reproducible stand-in for a team's strategy
//! software; it is not a reconstruction of any real team model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::env::Policy;
use crate::error::{Error, Result};
use crate::sim::{Compound, PerCompound, TrackConfig};
use crate::state::UnifiedRaceState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeuristicParams {
    /// Pit once degradation reaches this many seconds per lap.
    pub deg_threshold: f64,
    /// No planned stop before this fraction of the race.
    pub earliest: f64,
    /// A stop still needed for a valid finish is forced from here on.
    pub latest: f64,
    /// Take a pending stop early when a safety car is out.
    pub sc_opportunism: bool,
    /// Target stint length per compound, as a fraction of race distance.
    pub stint_target: PerCompound<f64>,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams {
            deg_threshold: 1.5,
            earliest: 0.2,
            latest: 0.8,
            sc_opportunism: true,
            stint_target: PerCompound::new(0.35, 0.55, 0.8),
        }
    }
}

impl HeuristicParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::Format(format!("heuristic params: {reason}")));
        if self.deg_threshold.is_nan() || self.deg_threshold <= 0.0 {
            return bad("deg_threshold must be positive");
        }
        for f in [self.earliest, self.latest] {
            if !(f > 0.0 && f < 1.0) {
                return bad("earliest and latest must lie in (0, 1)");
            }
        }
        if self.earliest > self.latest {
            return bad("earliest is after latest");
        }
        if self
            .stint_target
            .to_array()
            .iter()
            .any(|&s| s.is_nan() || s <= 0.0)
        {
            return bad("stint targets must be positive");
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: HeuristicParams = toml::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Decides one lap. `total_laps` converts race progress to laps.
pub fn heuristic_action(
    state: &UnifiedRaceState,
    params: &HeuristicParams,
    total_laps: u32,
) -> Action {
    let progress = state.race_progress;
    let laps_left = total_laps as f64 * (1.0 - progress);
    if laps_left < 1.5 {
        return Action::NoPit;
    }
    let worn = state.tyre_degradation >= params.deg_threshold;
    let half_worn = state.tyre_degradation >= params.deg_threshold / 2.0;
    let need_second = !state.valid_finish;

    let planned =
        progress >= params.earliest && (worn || (need_second && progress >= params.latest));
    let opportunistic = params.sc_opportunism
        && state.safety_car.is_deployed()
        && progress >= params.earliest / 2.0
        && (need_second || half_worn);
    // A worn tyre late on is nursed home once the finish is already valid.
    let worth_it = need_second || laps_left >= 5.0;
    if !(planned || opportunistic) || !worth_it {
        return Action::NoPit;
    }
    match choose_compound(state, params, total_laps, laps_left) {
        Some(c) => Action::pit(c),
        None => Action::NoPit,
    }
}

/// Hardest available compound that reaches the flag at its target stint
/// length, else the longest-lasting one available.
fn choose_compound(
    state: &UnifiedRaceState,
    params: &HeuristicParams,
    total_laps: u32,
    laps_left: f64,
) -> Option<Compound> {
    let candidates: Vec<Compound> = Compound::ALL
        .into_iter()
        .filter(|&c| state.available(c))
        .filter(|&c| state.valid_finish || c != state.current_tyre)
        .collect();
    let reach = |c: Compound| params.stint_target.get(c) * total_laps as f64;
    candidates
        .iter()
        .rev()
        .copied()
        .find(|&c| reach(c) >= laps_left)
        .or_else(|| {
            candidates
                .iter()
                .copied()
                .max_by(|&a, &b| reach(a).total_cmp(&reach(b)))
        })
}

#[derive(Debug, Clone, Default)]
pub struct HeuristicPolicy {
    pub params: HeuristicParams,
    total_laps: u32,
}

impl HeuristicPolicy {
    pub fn new(params: HeuristicParams) -> Self {
        HeuristicPolicy {
            params,
            total_laps: 0,
        }
    }
}

impl Policy for HeuristicPolicy {
    fn name(&self) -> String {
        "heuristic".into()
    }

    fn begin_race(&mut self, config: &TrackConfig, _seed: u64) {
        self.total_laps = config.total_laps;
    }

    fn act(&mut self, state: &UnifiedRaceState) -> Action {
        heuristic_action(state, &self.params, self.total_laps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::reward::reward;
    use crate::env::run_race;
    use crate::sim::{SafetyCar, TrackId};

    fn state(progress: f64, deg: f64) -> UnifiedRaceState {
        UnifiedRaceState {
            terminal: false,
            track: TrackId::BHR,
            safety_car: SafetyCar::None,
            position: 5,
            race_progress: progress,
            current_tyre: Compound::Soft,
            tyre_degradation: deg,
            soft_available: true,
            medium_available: true,
            hard_available: true,
            gap_ahead: 1.0,
            gap_behind: 1.0,
            gap_to_leader: 10.0,
            last_lap_to_reference: 1.0,
            valid_finish: false,
        }
    }

    #[test]
    fn low_wear_stays_out() {
        let p = HeuristicParams::default();
        assert_eq!(heuristic_action(&state(0.4, 0.5), &p, 57), Action::NoPit);
    }

    #[test]
    fn safety_car_triggers_pending_stop() {
        let p = HeuristicParams::default();
        // 57 laps, 30 to go.
        let mut s = state(27.0 / 57.0, 0.5);
        s.safety_car = SafetyCar::Full;
        assert_eq!(heuristic_action(&s, &p, 57), Action::PitHard);
    }

    #[test]
    fn exhausted_compounds() {
        let p = HeuristicParams::default();
        let mut s = state(0.5, 2.0);
        s.soft_available = false;
        s.medium_available = false;
        assert_eq!(heuristic_action(&s, &p, 57), Action::PitHard);
        s.hard_available = false;
        assert_eq!(heuristic_action(&s, &p, 57), Action::NoPit);
    }

    #[test]
    fn forced_second_compound_late() {
        let p = HeuristicParams::default();
        let mut s = state(0.85, 0.1);
        s.hard_available = false;
        assert_eq!(heuristic_action(&s, &p, 57), Action::PitMedium);
        s.medium_available = false;
        // Soft is the current tyre and would not make the finish valid.
        assert_eq!(heuristic_action(&s, &p, 57), Action::NoPit);
    }

    #[test]
    fn never_scores_invalid_pit() {
        let p = HeuristicParams::default();
        for prog in 0..=20 {
            for deg in [0.0, 0.8, 1.6, 3.0] {
                for mask in 0..8u8 {
                    for sc in SafetyCar::ALL {
                        for vf in [false, true] {
                            let mut s = state(prog as f64 / 20.0, deg);
                            s.soft_available = mask & 1 != 0;
                            s.medium_available = mask & 2 != 0;
                            s.hard_available = mask & 4 != 0;
                            s.safety_car = sc;
                            s.valid_finish = vf;
                            let a = heuristic_action(&s, &p, 57);
                            let next = s.clone();
                            assert_ne!(reward(&s, a, &next), -1000.0, "{s:?} -> {a}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn finishes_bundled_races_validly() {
        for t in [TrackId::BHR, TrackId::MEX, TrackId::GBR] {
            let cfg = TrackConfig::bundled(t);
            let r = run_race(&cfg, &mut HeuristicPolicy::default(), 4, false).unwrap();
            assert!(!r.failed, "{t}");
            assert!(!r.pits.is_empty());
        }
    }

    #[test]
    fn params_from_toml() {
        let p = HeuristicParams::from_toml_str("deg_threshold = 2.0\nsc_opportunism = false\n")
            .unwrap();
        assert_eq!(p.deg_threshold, 2.0);
        assert!(!p.sc_opportunism);
        assert_eq!(p.latest, 0.8);
        assert!(HeuristicParams::from_toml_str("earliest = 1.5").is_err());
        assert!(HeuristicParams::from_toml_str("nonsense = 1").is_err());
    }
}
