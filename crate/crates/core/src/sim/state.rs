use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::track::TrackConfig;
use super::types::{Compound, PerCompound, SafetyCar};
use crate::action::Action;
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng, StreamRng};

/// Minimum interval kept behind a car that could not be passed (s).
pub const FOLLOW_GAP: f64 = 0.2;

/// Who decides a car's pit stops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyTag {
    /// Actions are supplied to [`SimState::step_lap`] every lap.
    External,
    /// Pit calls fixed at race start: `(lap, compound)` pairs.
    Scripted {
        plan: String,
        pits: Vec<(u32, Compound)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSlot {
    pub pace_delta: f64,
    pub starting_compound: Compound,
    pub policy: PolicyTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub car_id: usize,
    pub pace_delta: f64,
    pub current_compound: Compound,
    pub tyre_age: u32,
    pub compounds_used: PerCompound<bool>,
    pub remaining_sets: PerCompound<u32>,
    pub cumulative_time: f64,
    /// Cumulative time before the most recent lap.
    pub previous_time: f64,
    pub last_lap_time: Option<f64>,
    pub pit_count: u32,
    pub policy: PolicyTag,
    /// Lap on which a pit onto an exhausted compound was requested, if any.
    pub invalid_pit_lap: Option<u32>,
}

impl CarState {
    pub fn distinct_compounds(&self) -> usize {
        self.compounds_used
            .to_array()
            .iter()
            .filter(|&&u| u)
            .count()
    }

    pub fn has_set(&self, c: Compound) -> bool {
        self.remaining_sets.get(c) > 0
    }
}

/// One car's outcome for a completed lap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapRecord {
    pub lap: u32,
    pub car: usize,
    pub position: usize,
    pub compound: Compound,
    pub tyre_age: u32,
    pub lap_time: f64,
    pub cumulative_time: f64,
    pub sc_status: SafetyCar,
    pub action: Action,
}

/// Raw random draws consumed during one lap. Opponent draws depend only on the
/// race seed, never on any car's decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapDraws {
    pub lap: u32,
    /// Standard-normal noise per car id.
    pub noise: Vec<f64>,
    /// Safety-car rolls: deployment, kind, duration.
    pub safety_car: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapReport {
    pub records: Vec<LapRecord>,
    pub draws: LapDraws,
    /// Cars whose pit request could not be honoured.
    pub invalid_pits: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaps {
    pub gap_ahead: f64,
    pub gap_behind: f64,
    pub gap_to_leader: f64,
}

#[derive(Debug, Clone)]
struct SimRngs {
    safety_car: StreamRng,
    cars: Vec<StreamRng>,
}

/// Full simulator state. The race trace is a pure function of the config, the
/// grid, the seed and the supplied actions.
#[derive(Debug, Clone, Serialize)]
pub struct SimState {
    pub lap: u32,
    pub total_laps: u32,
    pub cars: Vec<CarState>,
    pub sc_status: SafetyCar,
    pub sc_laps_remaining: u32,
    /// Car ids in classification order (P1 first).
    pub classification: Vec<usize>,
    pub seed: u64,
    #[serde(skip)]
    rngs: SimRngs,
}

/// Geometric duration in laps with the given mean, from a uniform roll.
fn geometric_laps(u: f64, mean: f64) -> u32 {
    if mean <= 1.0 {
        return 1;
    }
    let p = 1.0 / mean;
    let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    ((1.0 - u).ln() / (1.0 - p).ln()).ceil().max(1.0) as u32
}

/// Green-flag lap time plus noise, scaled by any safety-car pace factor.
/// Traffic is resolved by [`SimState::step_lap`], which knows the running order.
pub fn lap_time<R: Rng + ?Sized>(
    car: &CarState,
    sim: &SimState,
    config: &TrackConfig,
    rng: &mut R,
) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    lap_time_with_noise(car, sim.lap, sim.sc_status, config, z)
}

fn lap_time_with_noise(
    car: &CarState,
    lap: u32,
    sc: SafetyCar,
    config: &TrackConfig,
    z: f64,
) -> f64 {
    let laps_remaining = config.total_laps.saturating_sub(lap) as f64;
    let green = config.reference_lap_time
        + car.pace_delta
        + config.compound_offset.get(car.current_compound)
        + config.degradation(car.current_compound, car.tyre_age)
        + config.fuel_effect * laps_remaining
        + config.lap_noise_sd * z;
    green * config.pace_factor(sc)
}

impl SimState {
    pub fn init_race(config: &TrackConfig, grid: &[GridSlot], seed: u64) -> Result<SimState> {
        config.validate()?;
        if grid.is_empty() || grid.len() > 20 {
            return Err(Error::GridSize(grid.len()));
        }
        let mut cars = Vec::with_capacity(grid.len());
        for (car_id, slot) in grid.iter().enumerate() {
            let mut remaining = config.tyre_allocation;
            let start = slot.starting_compound;
            if remaining.get(start) == 0 {
                return Err(Error::NoStartingSet {
                    car: car_id,
                    compound: start,
                });
            }
            *remaining.get_mut(start) -= 1;
            let mut used = PerCompound::<bool>::default();
            *used.get_mut(start) = true;
            cars.push(CarState {
                car_id,
                pace_delta: slot.pace_delta,
                current_compound: start,
                tyre_age: 0,
                compounds_used: used,
                remaining_sets: remaining,
                cumulative_time: 0.0,
                previous_time: 0.0,
                last_lap_time: None,
                pit_count: 0,
                policy: slot.policy.clone(),
                invalid_pit_lap: None,
            });
        }
        let rngs = SimRngs {
            safety_car: stream_rng(seed, &[stream::SAFETY_CAR]),
            cars: (0..grid.len())
                .map(|i| stream_rng(seed, &[stream::CAR_NOISE, i as u64]))
                .collect(),
        };
        Ok(SimState {
            lap: 0,
            total_laps: config.total_laps,
            classification: (0..grid.len()).collect(),
            cars,
            sc_status: SafetyCar::None,
            sc_laps_remaining: 0,
            seed,
            rngs,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.lap >= self.total_laps
    }

    /// Replaces every random stream, keeping the race as it stands. Used to
    /// roll a cloned race forward under fresh luck.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.rngs = SimRngs {
            safety_car: stream_rng(seed, &[stream::SAFETY_CAR]),
            cars: (0..self.cars.len())
                .map(|i| stream_rng(seed, &[stream::CAR_NOISE, i as u64]))
                .collect(),
        };
    }

    pub fn car(&self, car_id: usize) -> Result<&CarState> {
        self.cars.get(car_id).ok_or(Error::UnknownCar(car_id))
    }

    /// 1-based position of a car.
    pub fn position(&self, car_id: usize) -> Result<usize> {
        self.classification
            .iter()
            .position(|&c| c == car_id)
            .map(|p| p + 1)
            .ok_or(Error::UnknownCar(car_id))
    }

    /// Action a scripted car takes on the upcoming lap.
    pub fn scripted_action(&self, car_id: usize) -> Option<Action> {
        let upcoming = self.lap + 1;
        match &self.cars.get(car_id)?.policy {
            PolicyTag::External => None,
            PolicyTag::Scripted { pits, .. } => Some(
                pits.iter()
                    .find(|(lap, _)| *lap == upcoming)
                    .map(|&(_, c)| Action::pit(c))
                    .unwrap_or(Action::NoPit),
            ),
        }
    }

    /// Runs one lap for the whole field.
    ///
    /// `actions` must cover every externally controlled car; entries for
    /// scripted cars override their script. A pit onto a compound with no
    /// sets left is not performed and is reported in `invalid_pits`.
    pub fn step_lap(
        &mut self,
        config: &TrackConfig,
        actions: &BTreeMap<usize, Action>,
    ) -> Result<LapReport> {
        if self.is_finished() {
            return Err(Error::RaceFinished);
        }
        if let Some(&bad) = actions.keys().find(|&&id| id >= self.cars.len()) {
            return Err(Error::UnknownCar(bad));
        }
        let n = self.cars.len();
        let mut chosen = Vec::with_capacity(n);
        for id in 0..n {
            let action = match actions.get(&id) {
                Some(&a) => a,
                None => self.scripted_action(id).ok_or(Error::MissingAction(id))?,
            };
            chosen.push(action);
        }

        let lap_no = self.lap + 1;
        let sc = self.sc_status;
        let noise: Vec<f64> = self
            .rngs
            .cars
            .iter_mut()
            .map(|r| r.sample(StandardNormal))
            .collect();

        let mut executed = vec![false; n];
        let mut invalid_pits = Vec::new();
        for id in 0..n {
            if let Some(c) = chosen[id].compound() {
                if self.cars[id].has_set(c) {
                    executed[id] = true;
                } else {
                    invalid_pits.push(id);
                    if self.cars[id].invalid_pit_lap.is_none() {
                        self.cars[id].invalid_pit_lap = Some(lap_no);
                    }
                }
            }
        }

        // Resolve in running order so each car knows where the car ahead ended up.
        let order = self.classification.clone();
        let mut new_time = vec![0.0; n];
        let mut lap_times = vec![0.0; n];
        for (idx, &id) in order.iter().enumerate() {
            let car = &self.cars[id];
            let mut base = lap_time_with_noise(car, self.lap, sc, config, noise[id]);
            if lap_no == 1 {
                base += idx as f64 * config.start_gap;
            }
            let pit_cost = if executed[id] {
                config.pit_loss_under(sc)
            } else {
                0.0
            };
            let mut t = car.cumulative_time + base + pit_cost;
            if idx > 0 && !executed[id] {
                let ahead = order[idx - 1];
                if !executed[ahead] && t < new_time[ahead] + FOLLOW_GAP {
                    if sc.is_deployed() {
                        t = new_time[ahead] + FOLLOW_GAP;
                    } else if t < new_time[ahead] {
                        let advantage = lap_times[ahead] - base;
                        if advantage < config.overtake_threshold {
                            t = (t + config.traffic_penalty).max(new_time[ahead] + FOLLOW_GAP);
                        }
                    }
                }
            }
            new_time[id] = t;
            lap_times[id] = t - car.cumulative_time;
        }

        for id in 0..n {
            let car = &mut self.cars[id];
            car.previous_time = car.cumulative_time;
            car.cumulative_time = new_time[id];
            car.last_lap_time = Some(lap_times[id]);
            if executed[id] {
                let c = chosen[id].compound().expect("executed pit has a compound");
                *car.remaining_sets.get_mut(c) -= 1;
                *car.compounds_used.get_mut(c) = true;
                car.current_compound = c;
                car.tyre_age = 0;
                car.pit_count += 1;
            } else {
                car.tyre_age += 1;
            }
        }

        self.reclassify();
        self.lap = lap_no;

        let sc_roll: [f64; 3] = [
            self.rngs.safety_car.random(),
            self.rngs.safety_car.random(),
            self.rngs.safety_car.random(),
        ];
        if !self.is_finished() {
            self.advance_safety_car(config, sc_roll);
        } else {
            self.sc_status = SafetyCar::None;
            self.sc_laps_remaining = 0;
        }

        let records = order_records(self, &chosen, sc, &lap_times);
        Ok(LapReport {
            records,
            draws: LapDraws {
                lap: lap_no,
                noise,
                safety_car: sc_roll,
            },
            invalid_pits,
        })
    }

    fn reclassify(&mut self) {
        let prev_rank: Vec<usize> = {
            let mut r = vec![0; self.cars.len()];
            for (p, &id) in self.classification.iter().enumerate() {
                r[id] = p;
            }
            r
        };
        let cars = &self.cars;
        self.classification.sort_by(|&a, &b| {
            cars[a]
                .cumulative_time
                .total_cmp(&cars[b].cumulative_time)
                .then(prev_rank[a].cmp(&prev_rank[b]))
        });
    }

    fn advance_safety_car(&mut self, config: &TrackConfig, roll: [f64; 3]) {
        if self.sc_status.is_deployed() {
            self.sc_laps_remaining = self.sc_laps_remaining.saturating_sub(1);
            if self.sc_laps_remaining == 0 {
                self.sc_status = SafetyCar::None;
            }
            return;
        }
        if roll[0] < config.sc_deploy_prob {
            let kind = if roll[1] < config.vsc_share {
                SafetyCar::Virtual
            } else {
                SafetyCar::Full
            };
            let laps = geometric_laps(roll[2], config.sc_duration_mean);
            self.deploy(config, kind, laps);
        }
    }

    /// Deploys (or clears) a safety car for the upcoming laps. A full safety
    /// car bunches the field to `sc_gap` intervals behind the leader.
    pub fn deploy(&mut self, config: &TrackConfig, kind: SafetyCar, laps: u32) {
        if kind == SafetyCar::None {
            self.sc_status = SafetyCar::None;
            self.sc_laps_remaining = 0;
            return;
        }
        self.sc_status = kind;
        self.sc_laps_remaining = laps.max(1);
        if kind == SafetyCar::Full {
            self.compress_gaps(config.sc_gap);
        }
    }

    fn compress_gaps(&mut self, interval: f64) {
        let order = self.classification.clone();
        for k in 1..order.len() {
            let ahead = self.cars[order[k - 1]].cumulative_time;
            let car = &mut self.cars[order[k]];
            let gap = car.cumulative_time - ahead;
            let floor = car.previous_time + 1e-3;
            car.cumulative_time = (ahead + gap.min(interval)).max(floor);
        }
        self.reclassify();
    }

    /// Positional gaps for every car, indexed by car id.
    pub fn gaps(&self) -> Vec<Gaps> {
        let mut out = vec![
            Gaps {
                gap_ahead: 0.0,
                gap_behind: 0.0,
                gap_to_leader: 0.0,
            };
            self.cars.len()
        ];
        let Some(&leader) = self.classification.first() else {
            return out;
        };
        let leader_time = self.cars[leader].cumulative_time;
        for (p, &id) in self.classification.iter().enumerate() {
            let t = self.cars[id].cumulative_time;
            let g = &mut out[id];
            g.gap_to_leader = t - leader_time;
            if p > 0 {
                g.gap_ahead = t - self.cars[self.classification[p - 1]].cumulative_time;
            }
            if let Some(&behind) = self.classification.get(p + 1) {
                g.gap_behind = self.cars[behind].cumulative_time - t;
            }
        }
        out
    }

    /// Opaque fingerprint of the full state including generator positions.
    pub fn fingerprint(&self) -> String {
        let mut text = serde_json::to_string(self).expect("sim state serializes");
        text.push_str(&format!("|{}", self.rngs.safety_car.get_word_pos()));
        for r in &self.rngs.cars {
            text.push_str(&format!(",{}", r.get_word_pos()));
        }
        crate::util::sha256_hex(text.as_bytes())
    }
}

fn order_records(
    sim: &SimState,
    chosen: &[Action],
    sc: SafetyCar,
    lap_times: &[f64],
) -> Vec<LapRecord> {
    sim.classification
        .iter()
        .enumerate()
        .map(|(p, &id)| {
            let car = &sim.cars[id];
            LapRecord {
                lap: sim.lap,
                car: id,
                position: p + 1,
                compound: car.current_compound,
                tyre_age: car.tyre_age,
                lap_time: lap_times[id],
                cumulative_time: car.cumulative_time,
                sc_status: sc,
                action: chosen[id],
            }
        })
        .collect()
}
