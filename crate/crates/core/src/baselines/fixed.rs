use rand::Rng;

use super::strategy::StrategyPlan;
use crate::action::Action;
use crate::env::Policy;
use crate::error::Result;
use crate::rng::{label_hash, stream, stream_rng};
use crate::sim::{strategy_pool, Compound, TrackConfig};
use crate::state::UnifiedRaceState;

/// Follows one plan from a pool, chosen and timed at race start.
#[derive(Debug, Clone)]
pub struct FixedPolicy {
    name: String,
    pool: Vec<StrategyPlan>,
    total_laps: u32,
    chosen: Option<usize>,
    pits: Vec<(u32, Compound)>,
}

impl FixedPolicy {
    pub fn new(name: impl Into<String>, pool: Vec<StrategyPlan>) -> Self {
        assert!(!pool.is_empty(), "fixed policy needs at least one plan");
        FixedPolicy {
            name: name.into(),
            pool,
            total_laps: 0,
            chosen: None,
            pits: Vec::new(),
        }
    }

    pub fn single(plan: StrategyPlan) -> Self {
        let name = plan.to_string();
        FixedPolicy::new(name, vec![plan])
    }

    /// The track's shipped pool, as used by the "Fixed Strategy" baseline.
    pub fn for_track(config: &TrackConfig) -> Result<Self> {
        Ok(FixedPolicy::new("fixed", strategy_pool(config)?))
    }

    pub fn plan(&self) -> Option<&StrategyPlan> {
        self.chosen.map(|i| &self.pool[i])
    }

    /// Pit laps drawn for the current race.
    pub fn pits(&self) -> &[(u32, Compound)] {
        &self.pits
    }
}

impl Policy for FixedPolicy {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn begin_race(&mut self, config: &TrackConfig, seed: u64) {
        let mut rng = stream_rng(seed, &[stream::POLICY, label_hash(&self.name)]);
        let i = rng.random_range(0..self.pool.len());
        self.total_laps = config.total_laps;
        self.pits = self.pool[i].draw_pits(config.total_laps, &mut rng);
        self.chosen = Some(i);
    }

    fn starting_compound(&self) -> Option<Compound> {
        self.plan().map(|p| p.start)
    }

    fn act(&mut self, state: &UnifiedRaceState) -> Action {
        let upcoming = (state.race_progress * self.total_laps as f64).round() as u32 + 1;
        self.pits
            .iter()
            .find(|&&(lap, _)| lap == upcoming)
            .map(|&(_, c)| Action::pit(c))
            .unwrap_or(Action::NoPit)
    }
}
