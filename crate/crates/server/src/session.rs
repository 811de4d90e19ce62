//! One live race: the simulator, the agent's recurrent state, the pending
//! override and the append-only event log.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::Arc;

use pitwall::action::Action;
use pitwall::agent::{AgentPolicy, QNetwork, N_ACTIONS};
use pitwall::env::{Environment, Policy, RaceEnv};
use pitwall::rng::{derive_seed, label_hash};
use pitwall::sim::TrackConfig;
use pitwall::state::{attribution_groups, scale, ScalingProfile, UnifiedRaceState};
use pitwall::xai::{
    attribute, counterfactual, decision_path, CfOptions, DecisionTree, ShapleyMode,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{
    CarView, ExplainMethod, ExplanationPayload, Mode, SafetyCarEvent, Snapshot, WhatIfResult,
};

pub const LOG_FORMAT: &str = "pitwall-session-log";
pub const LOG_VERSION: u32 = 1;
/// Safety-car length when an injection does not give one.
pub const DEFAULT_SC_LAPS: u32 = 3;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("stale lap: command is for lap {got}, session is at lap {current}")]
    StaleLap { got: u32, current: u32 },
    #[error("race is finished")]
    Finished,
    #[error("{0} is not available")]
    Unavailable(Action),
    #[error("an override ({0}) is already pending for this lap")]
    OverridePending(Action),
    #[error("no decision tree loaded")]
    NoTree,
    #[error("what-if needs at least one rollout")]
    NoRollouts,
    #[error("event log: {0}")]
    Log(String),
    #[error(transparent)]
    Core(#[from] pitwall::Error),
}

pub type Result<T> = std::result::Result<T, SessionError>;

/// Something the strategist did, stamped with the completed-lap count at
/// the time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Inject {
        lap: u32,
        event: SafetyCarEvent,
        laps: u32,
    },
    Override {
        lap: u32,
        action: Action,
    },
    Advance {
        lap: u32,
        action: Action,
    },
}

/// Replayable record of a session: the track, the seed and every event in
/// order. With the same checkpoint it reproduces the race exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub profile_fingerprint: String,
    pub track: TrackConfig,
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("event log serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let log: EventLog =
            serde_json::from_str(text).map_err(|e| SessionError::Log(e.to_string()))?;
        if log.format != LOG_FORMAT || log.version != LOG_VERSION {
            return Err(SessionError::Log(format!(
                "unsupported format {} v{}",
                log.format, log.version
            )));
        }
        Ok(log)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| SessionError::Log(format!("{}: {e}", path.as_ref().display())))?;
        EventLog::from_json(&text)
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub mode: Mode,
    env: RaceEnv,
    agent: AgentPolicy,
    tree: Option<Arc<DecisionTree>>,
    pending: Option<Action>,
    log: EventLog,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        config: TrackConfig,
        seed: u64,
        mode: Mode,
        net: Arc<QNetwork>,
        profile: Arc<ScalingProfile>,
        tree: Option<Arc<DecisionTree>>,
    ) -> Result<Self> {
        let mut agent = AgentPolicy::new("rsrl", net, profile.clone());
        agent.begin_race(&config, seed);
        let mut env = RaceEnv::new(config.clone()).with_trace();
        env.reset_with(seed, agent.starting_compound())?;
        Ok(Session {
            id: id.into(),
            mode,
            env,
            agent,
            tree,
            pending: None,
            log: EventLog {
                format: LOG_FORMAT.into(),
                version: LOG_VERSION,
                seed,
                profile_fingerprint: profile.fingerprint(),
                track: config,
                events: Vec::new(),
            },
        })
    }

    /// Completed laps.
    pub fn lap(&self) -> u32 {
        self.env.sim().map_or(0, |s| s.lap)
    }

    pub fn is_finished(&self) -> bool {
        self.env.is_done()
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn env(&self) -> &RaceEnv {
        &self.env
    }

    /// Laps the agent's recurrent state has consumed.
    pub fn agent_steps(&self) -> usize {
        self.agent.inputs().len()
    }

    pub fn state(&self) -> &UnifiedRaceState {
        self.env.current().expect("session env is always reset")
    }

    pub fn check_lap(&self, lap: u32) -> Result<()> {
        if lap != self.lap() {
            return Err(SessionError::StaleLap {
                got: lap,
                current: self.lap(),
            });
        }
        Ok(())
    }

    fn require_live(&self) -> Result<()> {
        if self.is_finished() {
            return Err(SessionError::Finished);
        }
        Ok(())
    }

    /// The greedy choice for the coming lap and its Q-values. Does not touch
    /// the recurrent state.
    pub fn recommendation(&self) -> (Action, [f64; N_ACTIONS]) {
        let q = self.agent.peek(self.state());
        (QNetwork::greedy(&q), q)
    }

    pub fn snapshot(&self) -> Snapshot {
        let sim = self.env.sim().expect("session env is always reset");
        let gaps = sim.gaps();
        let controlled = self.env.controlled();
        let cars = sim
            .classification
            .iter()
            .enumerate()
            .map(|(p, &id)| {
                let c = &sim.cars[id];
                CarView {
                    car: id,
                    position: p + 1,
                    compound: c.current_compound,
                    tyre_age: c.tyre_age,
                    pit_count: c.pit_count,
                    gap_ahead: gaps[id].gap_ahead,
                    gap_to_leader: gaps[id].gap_to_leader,
                    last_lap_time: c.last_lap_time,
                    controlled: id == controlled,
                }
            })
            .collect();
        Snapshot {
            lap: sim.lap,
            total_laps: sim.total_laps,
            sc_status: sim.sc_status,
            sc_laps_remaining: sim.sc_laps_remaining,
            cars,
            controlled: self.state().clone(),
            pending_override: self.pending,
            finished: self.is_finished(),
        }
    }

    /// Hash over everything observable plus generator positions and the
    /// agent's memory.
    pub fn state_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.env.sim().map(|s| s.fingerprint()).hash(&mut h);
        serde_json::to_string(&self.snapshot())
            .expect("snapshot serializes")
            .hash(&mut h);
        for v in self.agent.hidden() {
            v.to_bits().hash(&mut h);
        }
        self.agent.inputs().len().hash(&mut h);
        self.log.events.len().hash(&mut h);
        h.finish()
    }

    /// Puts a safety car out (or withdraws it) before the coming lap.
    pub fn inject(&mut self, event: SafetyCarEvent, laps: Option<u32>) -> Result<()> {
        self.require_live()?;
        let laps = match event {
            SafetyCarEvent::Clear => 0,
            _ => laps.unwrap_or(DEFAULT_SC_LAPS).max(1),
        };
        let config = self.env.config().clone();
        let sim = self.env.sim_mut().ok_or(SessionError::Finished)?;
        sim.deploy(&config, event.status(), laps);
        self.env.refresh()?;
        self.log.events.push(Event::Inject {
            lap: self.lap(),
            event,
            laps,
        });
        Ok(())
    }

    /// Replaces the agent's choice for the coming lap. Rejected, with the
    /// session untouched, if the compound has no set left or an override is
    /// already pending.
    pub fn override_action(&mut self, action: Action) -> Result<()> {
        self.require_live()?;
        if let Some(p) = self.pending {
            return Err(SessionError::OverridePending(p));
        }
        if let Some(c) = action.compound() {
            if !self.state().available(c) {
                return Err(SessionError::Unavailable(action));
            }
        }
        self.pending = Some(action);
        self.log.events.push(Event::Override {
            lap: self.lap(),
            action,
        });
        Ok(())
    }

    /// Runs one lap and returns the action executed.
    pub fn advance(&mut self) -> Result<Action> {
        self.require_live()?;
        let state = self.state().clone();
        // the agent sees every lap exactly once, overridden or not
        let greedy = self.agent.act(&state);
        let action = self.pending.take().unwrap_or(greedy);
        let lap = self.lap();
        self.env.step(action)?;
        self.log.events.push(Event::Advance { lap, action });
        Ok(action)
    }

    pub fn explain(
        &self,
        method: ExplainMethod,
        target: Option<Action>,
        norm: Option<pitwall::xai::Norm>,
    ) -> Result<ExplanationPayload> {
        let profile = self.agent.profile();
        let x = scale(self.state(), profile);
        match method {
            ExplainMethod::Attribution => {
                let mut prefix = self.agent.inputs().to_vec();
                prefix.push(x);
                let t = prefix.len() - 1;
                let seed = derive_seed(self.log.seed, &[label_hash("explain"), t as u64]);
                let attribution = attribute(
                    self.agent.net(),
                    &prefix,
                    t,
                    &profile.baseline,
                    &attribution_groups(),
                    ShapleyMode::default(),
                    seed,
                )?;
                Ok(ExplanationPayload::Attribution { attribution })
            }
            ExplainMethod::Path => {
                let tree = self.tree.as_ref().ok_or(SessionError::NoTree)?;
                Ok(ExplanationPayload::Path(decision_path(tree, &x, profile)))
            }
            ExplainMethod::Counterfactual => {
                let tree = self.tree.as_ref().ok_or(SessionError::NoTree)?;
                let current = tree.predict(&x);
                let target = target.unwrap_or_else(|| {
                    *Action::ALL
                        .iter()
                        .find(|&&a| a != current)
                        .expect("four actions")
                });
                let opts = CfOptions {
                    norm: norm.unwrap_or_default(),
                    ..CfOptions::default()
                };
                let cf = counterfactual(tree, &x, target, &opts)?;
                let notes = cf.notes(profile, self.env.config().total_laps);
                Ok(ExplanationPayload::Counterfactual {
                    counterfactual: cf,
                    notes,
                })
            }
        }
    }

    /// Finishes the race `n` times from here with `action` on the coming
    /// lap and the agent thereafter, each continuation on fresh safety-car
    /// and lap-time draws. Works on clones; the session is not touched.
    pub fn whatif(&self, action: Action, n: usize, seed: Option<u64>) -> Result<WhatIfResult> {
        self.require_live()?;
        if n == 0 {
            return Err(SessionError::NoRollouts);
        }
        let base = seed.unwrap_or_else(|| {
            derive_seed(
                self.log.seed,
                &[label_hash("whatif"), self.log.events.len() as u64],
            )
        });
        let field = self.env.config().field.size;
        let mut distribution = vec![0; field];
        let mut failures = 0;
        let mut total = 0.0;
        for i in 0..n {
            let mut env = self.env.clone();
            let mut agent = self.agent.clone();
            if let Some(sim) = env.sim_mut() {
                sim.reseed(derive_seed(base, &[i as u64]));
            }
            let state = self.state().clone();
            agent.act(&state);
            let mut tr = env.step(action)?;
            while !tr.terminal {
                let a = agent.act(&tr.state);
                tr = env.step(a)?;
            }
            let out = env.outcome().expect("race finished");
            distribution[out.finish - 1] += 1;
            failures += usize::from(out.failed);
            total += out.finish as f64;
        }
        Ok(WhatIfResult {
            action,
            n,
            distribution,
            mean_finish: total / n as f64,
            failures,
        })
    }

    /// Final classification (car ids, P1 first), with a failed controlled
    /// car moved to the back.
    pub fn classification(&self) -> Vec<usize> {
        let sim = self.env.sim().expect("session env is always reset");
        let mut order = sim.classification.clone();
        if self.env.outcome().is_some_and(|o| o.failed) {
            let c = self.env.controlled();
            order.retain(|&id| id != c);
            order.push(c);
        }
        order
    }

    /// Position of the controlled car, and whether its race failed.
    pub fn result(&self) -> (usize, bool) {
        match self.env.outcome() {
            Some(o) => (o.finish, o.failed),
            None => (self.state().position, false),
        }
    }
}

/// Re-executes a session from its log. Fails if the log does not fit the
/// given agent or an event no longer applies.
pub fn replay(log: &EventLog, net: Arc<QNetwork>, profile: Arc<ScalingProfile>) -> Result<Session> {
    if log.profile_fingerprint != profile.fingerprint() {
        return Err(SessionError::Log(
            "scaling profile differs from the one the session used".into(),
        ));
    }
    let mut s = Session::new(
        "replay",
        log.track.clone(),
        log.seed,
        Mode::StepOnCommand,
        net,
        profile,
        None,
    )?;
    for ev in &log.events {
        match *ev {
            Event::Inject { lap, event, laps } => {
                s.check_lap(lap)?;
                s.inject(event, Some(laps))?;
            }
            Event::Override { lap, action } => {
                s.check_lap(lap)?;
                s.override_action(action)?;
            }
            Event::Advance { lap, action } => {
                s.check_lap(lap)?;
                let done = s.advance()?;
                if done != action {
                    return Err(SessionError::Log(format!(
                        "lap {}: logged {action}, replay chose {done}",
                        lap + 1
                    )));
                }
            }
        }
    }
    Ok(s)
}
