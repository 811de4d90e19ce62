use std::sync::Arc;

use rand::Rng;

use super::network::{Hidden, QNetwork, N_ACTIONS};
use super::train::select_action;
use crate::action::Action;
use crate::env::Policy;
use crate::rng::{label_hash, stream, stream_rng, StreamRng};
use crate::sim::TrackConfig;
use crate::state::{scale, FeatureVector, ScalingProfile, UnifiedRaceState};

/// Greedy (or epsilon-greedy) play from a trained network.
#[derive(Debug, Clone)]
pub struct AgentPolicy {
    pub name: String,
    net: Arc<QNetwork>,
    profile: Arc<ScalingProfile>,
    hidden: Hidden,
    epsilon: f64,
    mask_invalid: bool,
    rng: StreamRng,
    last_q: Option<[f64; N_ACTIONS]>,
    inputs: Vec<FeatureVector>,
}

impl AgentPolicy {
    pub fn new(name: impl Into<String>, net: Arc<QNetwork>, profile: Arc<ScalingProfile>) -> Self {
        let hidden = net.initial_hidden();
        AgentPolicy {
            name: name.into(),
            net,
            profile,
            hidden,
            epsilon: 0.0,
            mask_invalid: false,
            rng: stream_rng(0, &[]),
            last_q: None,
            inputs: Vec::new(),
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_mask(mut self, mask_invalid: bool) -> Self {
        self.mask_invalid = mask_invalid;
        self
    }

    pub fn net(&self) -> &Arc<QNetwork> {
        &self.net
    }

    pub fn profile(&self) -> &Arc<ScalingProfile> {
        &self.profile
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    /// Q-values behind the most recent decision.
    pub fn last_q(&self) -> Option<[f64; N_ACTIONS]> {
        self.last_q
    }

    /// Scaled inputs seen so far this race, oldest first.
    pub fn inputs(&self) -> &[FeatureVector] {
        &self.inputs
    }

    pub fn reset(&mut self) {
        self.hidden = self.net.initial_hidden();
        self.last_q = None;
        self.inputs.clear();
    }

    /// Q-values for `state` without advancing the recurrent state.
    pub fn peek(&self, state: &UnifiedRaceState) -> [f64; N_ACTIONS] {
        let x = scale(state, &self.profile);
        self.net.step(&x.0, &self.hidden).q
    }
}

impl Policy for AgentPolicy {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn begin_race(&mut self, _config: &TrackConfig, seed: u64) {
        self.reset();
        self.rng = stream_rng(seed, &[stream::POLICY, label_hash(&self.name)]);
    }

    fn act(&mut self, state: &UnifiedRaceState) -> Action {
        let x = scale(state, &self.profile);
        let c = self.net.step(&x.0, &self.hidden);
        self.hidden = c.hidden().to_vec();
        self.last_q = Some(c.q);
        self.inputs.push(x);
        select_action(
            &c.q,
            self.epsilon,
            &mut self.rng,
            state.availability(),
            self.mask_invalid,
        )
    }
}

/// Uniformly random action every lap.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: StreamRng,
}

impl Default for RandomPolicy {
    fn default() -> Self {
        RandomPolicy {
            rng: stream_rng(0, &[]),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn begin_race(&mut self, _config: &TrackConfig, seed: u64) {
        self.rng = stream_rng(seed, &[stream::POLICY, label_hash("random")]);
    }

    fn act(&mut self, _state: &UnifiedRaceState) -> Action {
        Action::ALL[self.rng.random_range(0..Action::COUNT)]
    }
}
