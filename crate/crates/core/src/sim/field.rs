use rand::Rng;

use super::state::{GridSlot, PolicyTag};
use super::track::TrackConfig;
use super::types::Compound;
use crate::baselines::strategy::{parse_strategy, StrategyPlan};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// A grid with one externally controlled car and scripted opponents.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Vec<GridSlot>,
    pub controlled: usize,
}

pub fn strategy_pool(config: &TrackConfig) -> Result<Vec<StrategyPlan>> {
    if config.strategies.is_empty() {
        return Err(Error::Strategy {
            text: String::new(),
            reason: format!("track {} ships no strategy pool", config.track_id),
        });
    }
    config
        .strategies
        .iter()
        .map(|s| parse_strategy(s))
        .collect()
}

/// Builds the grid for one race.
///
/// Opponents are spread evenly in pace around the field median and each draws
/// a plan from the track's strategy pool, with pit laps drawn inside the
/// windows. All of this depends on `seed` alone. The controlled car starts on
/// `controlled_start` if given, otherwise on a compound drawn by the simulator.
pub fn build_field(
    config: &TrackConfig,
    controlled_start: Option<Compound>,
    seed: u64,
) -> Result<Field> {
    let pool = strategy_pool(config)?;
    let n_opp = config.field.size.saturating_sub(1);
    let centre = (n_opp as f64 - 1.0) / 2.0;
    let mut slots: Vec<(GridSlot, bool)> = Vec::with_capacity(config.field.size);
    for j in 0..n_opp {
        let mut rng = stream_rng(seed, &[stream::FIELD, j as u64]);
        let plan = &pool[rng.random_range(0..pool.len())];
        let pits = plan.draw_pits(config.total_laps, &mut rng);
        slots.push((
            GridSlot {
                pace_delta: (j as f64 - centre) * config.field.pace_spread,
                starting_compound: plan.start,
                policy: PolicyTag::Scripted {
                    plan: plan.to_string(),
                    pits,
                },
            },
            false,
        ));
    }
    let start = match controlled_start {
        Some(c) => c,
        None => {
            let mut rng = stream_rng(seed, &[stream::FIELD, u64::MAX]);
            let options: Vec<Compound> = [Compound::Soft, Compound::Medium]
                .into_iter()
                .filter(|&c| config.tyre_allocation.get(c) > 0)
                .collect();
            let options = if options.is_empty() {
                Compound::ALL
                    .into_iter()
                    .filter(|&c| config.tyre_allocation.get(c) > 0)
                    .collect()
            } else {
                options
            };
            options[rng.random_range(0..options.len())]
        }
    };
    slots.push((
        GridSlot {
            pace_delta: config.field.controlled_pace_delta,
            starting_compound: start,
            policy: PolicyTag::External,
        },
        true,
    ));
    // Fastest first; the controlled car lines up behind opponents of equal pace.
    slots.sort_by(|a, b| {
        a.0.pace_delta
            .total_cmp(&b.0.pace_delta)
            .then(a.1.cmp(&b.1))
    });
    let controlled = slots
        .iter()
        .position(|(_, c)| *c)
        .expect("controlled car present");
    Ok(Field {
        grid: slots.into_iter().map(|(s, _)| s).collect(),
        controlled,
    })
}
