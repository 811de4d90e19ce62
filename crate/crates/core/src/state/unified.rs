use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Compound, LapRecord, SafetyCar, SimState, TrackConfig, TrackId};

/// Source-independent snapshot of the controlled car, one row per state
/// variable. Starred rows (terminal, raw position, raw degradation, raw gaps)
/// feed the reward but only reach the model in scaled form, if at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedRaceState {
    pub terminal: bool,
    pub track: TrackId,
    pub safety_car: SafetyCar,
    pub position: usize,
    pub race_progress: f64,
    pub current_tyre: Compound,
    /// Time lost per lap to tyre wear (s/lap).
    pub tyre_degradation: f64,
    pub soft_available: bool,
    pub medium_available: bool,
    pub hard_available: bool,
    pub gap_ahead: f64,
    pub gap_behind: f64,
    pub gap_to_leader: f64,
    pub last_lap_to_reference: f64,
    pub valid_finish: bool,
}

impl UnifiedRaceState {
    pub fn available(&self, c: Compound) -> bool {
        match c {
            Compound::Soft => self.soft_available,
            Compound::Medium => self.medium_available,
            Compound::Hard => self.hard_available,
        }
    }

    pub fn availability(&self) -> [bool; 3] {
        [
            self.soft_available,
            self.medium_available,
            self.hard_available,
        ]
    }
}

/// Converts a data source's snapshot into the unified state.
pub trait Translator {
    type Snapshot: ?Sized;

    fn translate(&self, snapshot: &Self::Snapshot, car_id: usize) -> Result<UnifiedRaceState>;
}

/// Translator for the built-in simulator.
#[derive(Debug, Clone, Copy)]
pub struct SimTranslator<'a> {
    pub config: &'a TrackConfig,
}

impl Translator for SimTranslator<'_> {
    type Snapshot = SimState;

    fn translate(&self, sim: &SimState, car_id: usize) -> Result<UnifiedRaceState> {
        translate(sim, self.config, car_id)
    }
}

pub fn translate(sim: &SimState, config: &TrackConfig, car_id: usize) -> Result<UnifiedRaceState> {
    let car = sim.car(car_id)?;
    let position = sim.position(car_id)?;
    let gaps = sim.gaps()[car_id];
    let llr = car
        .last_lap_time
        .map(|t| (t / config.reference_lap_time).clamp(0.0, 2.0))
        .unwrap_or(1.0);
    Ok(UnifiedRaceState {
        terminal: sim.is_finished(),
        track: config.track_id,
        safety_car: sim.sc_status,
        position,
        race_progress: sim.lap as f64 / sim.total_laps as f64,
        current_tyre: car.current_compound,
        tyre_degradation: config.degradation(car.current_compound, car.tyre_age),
        soft_available: car.has_set(Compound::Soft),
        medium_available: car.has_set(Compound::Medium),
        hard_available: car.has_set(Compound::Hard),
        gap_ahead: gaps.gap_ahead,
        gap_behind: gaps.gap_behind,
        gap_to_leader: gaps.gap_to_leader,
        last_lap_to_reference: llr,
        valid_finish: car.distinct_compounds() >= 2,
    })
}

/// Rebuilds a car's state after `lap` from an exported per-lap trace.
///
/// The trace records the safety-car status during each lap, so the status
/// going into lap `lap + 1` is read from that lap's rows (green at the flag).
/// A stop is recognised by a tyre age of zero; the starting compound of a car
/// that stopped on lap 1 is assumed equal to the fitted one.
#[derive(Debug, Clone, Copy)]
pub struct TraceTranslator<'a> {
    pub config: &'a TrackConfig,
    pub lap: u32,
}

impl Translator for TraceTranslator<'_> {
    type Snapshot = [LapRecord];

    fn translate(&self, records: &[LapRecord], car_id: usize) -> Result<UnifiedRaceState> {
        let cfg = self.config;
        let lap = self.lap;
        let n_cars = records.iter().map(|r| r.car + 1).max().unwrap_or(0);
        if car_id >= n_cars {
            return Err(Error::UnknownCar(car_id));
        }
        let max_lap = records.iter().map(|r| r.lap).max().unwrap_or(0);
        if lap > max_lap || lap > cfg.total_laps {
            return Err(Error::Format(format!("trace has no lap {lap}")));
        }
        let mine: Vec<&LapRecord> = {
            let mut v: Vec<&LapRecord> = records
                .iter()
                .filter(|r| r.car == car_id && r.lap <= lap)
                .collect();
            v.sort_by_key(|r| r.lap);
            v
        };
        let start = records
            .iter()
            .filter(|r| r.car == car_id)
            .min_by_key(|r| r.lap)
            .map(|r| r.compound)
            .ok_or(Error::UnknownCar(car_id))?;
        let mut remaining = cfg.tyre_allocation;
        let mut used = [false; 3];
        *remaining.get_mut(start) = remaining.get(start).saturating_sub(1);
        used[start.index()] = true;
        for r in mine.iter().filter(|r| r.tyre_age == 0) {
            *remaining.get_mut(r.compound) = remaining.get(r.compound).saturating_sub(1);
            used[r.compound.index()] = true;
        }
        let (compound, age) = mine
            .last()
            .map(|r| (r.compound, r.tyre_age))
            .unwrap_or((start, 0));
        let at_lap: Vec<&LapRecord> = records.iter().filter(|r| r.lap == lap).collect();
        let (position, gaps) = if lap == 0 {
            (car_id + 1, (0.0, 0.0, 0.0))
        } else {
            let mut order = at_lap.clone();
            order.sort_by_key(|r| r.position);
            let p = order
                .iter()
                .position(|r| r.car == car_id)
                .ok_or(Error::UnknownCar(car_id))?;
            let t = order[p].cumulative_time;
            let ahead = if p > 0 {
                t - order[p - 1].cumulative_time
            } else {
                0.0
            };
            let behind = order
                .get(p + 1)
                .map(|r| r.cumulative_time - t)
                .unwrap_or(0.0);
            (
                order[p].position,
                (ahead, behind, t - order[0].cumulative_time),
            )
        };
        let llr = mine
            .last()
            .map(|r| (r.lap_time / cfg.reference_lap_time).clamp(0.0, 2.0))
            .unwrap_or(1.0);
        let safety_car = records
            .iter()
            .find(|r| r.lap == lap + 1)
            .map(|r| r.sc_status)
            .unwrap_or(SafetyCar::None);
        Ok(UnifiedRaceState {
            terminal: lap >= cfg.total_laps,
            track: cfg.track_id,
            safety_car,
            position,
            race_progress: lap as f64 / cfg.total_laps as f64,
            current_tyre: compound,
            tyre_degradation: cfg.degradation(compound, age),
            soft_available: remaining.soft > 0,
            medium_available: remaining.medium > 0,
            hard_available: remaining.hard > 0,
            gap_ahead: gaps.0,
            gap_behind: gaps.1,
            gap_to_leader: gaps.2,
            last_lap_to_reference: llr,
            valid_finish: used.iter().filter(|&&u| u).count() >= 2,
        })
    }
}

/// Placeholder for a live timing feed. Not implemented.
#[derive(Debug, Clone, Copy, Default)]
pub struct LiveTimingTranslator;

impl Translator for LiveTimingTranslator {
    type Snapshot = serde_json::Value;

    fn translate(&self, _: &serde_json::Value, _: usize) -> Result<UnifiedRaceState> {
        Err(Error::Unsupported("live timing translation"))
    }
}

/// Placeholder for racing-game UDP telemetry. Not implemented.
#[derive(Debug, Clone, Copy, Default)]
pub struct GameTelemetryTranslator;

impl Translator for GameTelemetryTranslator {
    type Snapshot = [u8];

    fn translate(&self, _: &[u8], _: usize) -> Result<UnifiedRaceState> {
        Err(Error::Unsupported("game telemetry translation"))
    }
}
