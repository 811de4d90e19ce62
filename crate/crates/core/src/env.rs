//! Single-agent race environment and the policy interface.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::agent::reward::reward;
use crate::error::{Error, Result};
use crate::sim::{build_field, Compound, LapDraws, LapRecord, SimState, TrackConfig};
use crate::state::{translate, UnifiedRaceState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: UnifiedRaceState,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceOutcome {
    /// Final position; failed races are classified last.
    pub finish: usize,
    /// Invalid pit request or no second compound at the flag.
    pub failed: bool,
}

/// Episodic environment seen by the agent.
pub trait Environment {
    fn reset(&mut self, seed: u64) -> Result<UnifiedRaceState>;
    fn step(&mut self, action: Action) -> Result<Transition>;
    fn outcome(&self) -> Option<RaceOutcome>;
}

/// Something that picks an action each lap.
pub trait Policy: Send {
    fn name(&self) -> String;

    /// Called before the race starts; `seed` is the race seed.
    fn begin_race(&mut self, _config: &TrackConfig, _seed: u64) {}

    /// Compound the policy wants to start on; `None` lets the simulator choose.
    fn starting_compound(&self) -> Option<Compound> {
        None
    }

    fn act(&mut self, state: &UnifiedRaceState) -> Action;
}

/// The controlled car in a simulated field of scripted opponents.
#[derive(Debug, Clone)]
pub struct RaceEnv {
    config: TrackConfig,
    sim: Option<SimState>,
    controlled: usize,
    current: Option<UnifiedRaceState>,
    failed: bool,
    done: bool,
    record: bool,
    records: Vec<LapRecord>,
    draws: Vec<LapDraws>,
}

impl RaceEnv {
    pub fn new(config: TrackConfig) -> Self {
        RaceEnv {
            config,
            sim: None,
            controlled: 0,
            current: None,
            failed: false,
            done: false,
            record: false,
            records: Vec::new(),
            draws: Vec::new(),
        }
    }

    /// Keep per-lap records and random draws for export.
    pub fn with_trace(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn config(&self) -> &TrackConfig {
        &self.config
    }

    pub fn sim(&self) -> Option<&SimState> {
        self.sim.as_ref()
    }

    /// Mutable simulator access for event injection between laps.
    pub fn sim_mut(&mut self) -> Option<&mut SimState> {
        self.sim.as_mut()
    }

    pub fn controlled(&self) -> usize {
        self.controlled
    }

    pub fn current(&self) -> Option<&UnifiedRaceState> {
        self.current.as_ref()
    }

    pub fn records(&self) -> &[LapRecord] {
        &self.records
    }

    pub fn draws(&self) -> &[LapDraws] {
        &self.draws
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset_with(&mut self, seed: u64, start: Option<Compound>) -> Result<UnifiedRaceState> {
        let field = build_field(&self.config, start, seed)?;
        let sim = SimState::init_race(&self.config, &field.grid, seed)?;
        self.controlled = field.controlled;
        let state = translate(&sim, &self.config, self.controlled)?;
        self.sim = Some(sim);
        self.current = Some(state.clone());
        self.failed = false;
        self.done = false;
        self.records.clear();
        self.draws.clear();
        Ok(state)
    }

    /// Re-reads the controlled car's state, e.g. after injecting a safety car.
    pub fn refresh(&mut self) -> Result<UnifiedRaceState> {
        let sim = self.sim.as_ref().ok_or(Error::RaceFinished)?;
        let mut state = translate(sim, &self.config, self.controlled)?;
        state.terminal = self.done;
        self.current = Some(state.clone());
        Ok(state)
    }
}

impl Environment for RaceEnv {
    fn reset(&mut self, seed: u64) -> Result<UnifiedRaceState> {
        self.reset_with(seed, None)
    }

    fn step(&mut self, action: Action) -> Result<Transition> {
        if self.done {
            return Err(Error::RaceFinished);
        }
        let (Some(sim), Some(prev)) = (self.sim.as_mut(), self.current.take()) else {
            return Err(Error::RaceFinished);
        };
        let actions: BTreeMap<usize, Action> = [(self.controlled, action)].into();
        let report = sim.step_lap(&self.config, &actions)?;
        let invalid = report.invalid_pits.contains(&self.controlled);
        if self.record {
            self.records.extend(report.records);
            self.draws.push(report.draws);
        }
        let mut next = translate(sim, &self.config, self.controlled)?;
        if invalid {
            next.terminal = true;
        }
        let r = reward(&prev, action, &next);
        if next.terminal {
            self.done = true;
            self.failed = invalid || !next.valid_finish;
        }
        self.current = Some(next.clone());
        Ok(Transition {
            terminal: next.terminal,
            state: next,
            reward: r,
        })
    }

    fn outcome(&self) -> Option<RaceOutcome> {
        if !self.done {
            return None;
        }
        let sim = self.sim.as_ref()?;
        let finish = if self.failed {
            sim.cars.len()
        } else {
            sim.position(self.controlled).ok()?
        };
        Some(RaceOutcome {
            finish,
            failed: self.failed,
        })
    }
}

/// Everything recorded about one race of one policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RaceResult {
    pub seed: u64,
    pub finish: usize,
    pub failed: bool,
    pub total_reward: f64,
    pub start: Compound,
    /// Executed or attempted stops as `(lap, compound)`.
    pub pits: Vec<(u32, Compound)>,
    /// States seen before each decision, plus the terminal state.
    pub states: Vec<UnifiedRaceState>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    #[serde(skip)]
    pub records: Vec<LapRecord>,
    #[serde(skip)]
    pub draws: Vec<LapDraws>,
}

/// Plays one race with `policy` controlling the car.
pub fn run_race(
    config: &TrackConfig,
    policy: &mut dyn Policy,
    seed: u64,
    keep_trace: bool,
) -> Result<RaceResult> {
    let mut env = RaceEnv::new(config.clone());
    if keep_trace {
        env = env.with_trace();
    }
    policy.begin_race(config, seed);
    let mut state = env.reset_with(seed, policy.starting_compound())?;
    let start = state.current_tyre;
    let mut states = vec![state.clone()];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut pits = Vec::new();
    loop {
        let lap = env.sim().map(|s| s.lap + 1).unwrap_or(0);
        let action = policy.act(&state);
        if let Some(c) = action.compound() {
            pits.push((lap, c));
        }
        let tr = env.step(action)?;
        actions.push(action);
        rewards.push(tr.reward);
        states.push(tr.state.clone());
        state = tr.state;
        if tr.terminal {
            break;
        }
    }
    let outcome = env.outcome().expect("race finished");
    Ok(RaceResult {
        seed,
        finish: outcome.finish,
        failed: outcome.failed,
        total_reward: rewards.iter().sum(),
        start,
        pits,
        states,
        actions,
        rewards,
        records: env.records.clone(),
        draws: env.draws.clone(),
    })
}
