use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::state::FeatureVector;

/// One finished race as seen by the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Observations before every decision plus the final one; one longer
    /// than `actions`.
    pub obs: Vec<FeatureVector>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub finish: usize,
    pub seed: u64,
}

/// Borrowed view of consecutive transitions of one episode.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    /// `actions.len() + 1` observations.
    pub obs: &'a [FeatureVector],
    pub actions: &'a [Action],
    pub rewards: &'a [f64],
    /// Whether the last transition ends the episode.
    pub terminal: bool,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// `(s, a, r, s', terminal)` tuples; only the last is terminal.
    pub fn transitions(
        &self,
    ) -> impl Iterator<Item = (&FeatureVector, Action, f64, &FeatureVector, bool)> {
        let n = self.len();
        (0..n).map(move |t| {
            (
                &self.obs[t],
                self.actions[t],
                self.rewards[t],
                &self.obs[t + 1],
                t + 1 == n,
            )
        })
    }

    /// Transitions `start..start + len`, clipped to the episode.
    pub fn segment(&self, start: usize, len: usize) -> Segment<'_> {
        let end = (start + len).min(self.len());
        Segment {
            obs: &self.obs[start..=end],
            actions: &self.actions[start..end],
            rewards: &self.rewards[start..end],
            terminal: end == self.len(),
        }
    }

    pub fn full(&self) -> Segment<'_> {
        self.segment(0, self.len())
    }
}

/// Ring buffer of whole episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            episodes: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, ep: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(ep);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&EpisodeRecord> {
        self.episodes.get(i)
    }

    /// `n` segments from uniformly drawn episodes, each starting at a uniform
    /// offset. `unroll == 0` takes whole episodes.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        unroll: usize,
        rng: &mut R,
    ) -> Vec<Segment<'_>> {
        if self.episodes.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| {
                let ep = &self.episodes[rng.random_range(0..self.episodes.len())];
                if unroll == 0 || ep.len() <= unroll {
                    ep.full()
                } else {
                    ep.segment(rng.random_range(0..=ep.len() - unroll), unroll)
                }
            })
            .collect()
    }
}
