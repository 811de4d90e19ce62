//! Per-timestep Shapley attributions for the recurrent Q-network.
//!
//! Only the features of step `t` are perturbed. The hidden state entering
//! step `t` is replayed from the true inputs `0..t`, so each coalition costs
//! one cell evaluation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::agent::QNetwork;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng};
use crate::state::{FeatureGroup, FeatureVector};

/// Largest group count solved by full enumeration.
pub const MAX_EXACT_GROUPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapleyMethod {
    Exact,
    Sampled { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub t: usize,
    pub action: Action,
    pub values: Vec<GroupValue>,
    /// Q(action) with every group at its baseline value.
    pub base: f64,
    /// Q(action) on the true input.
    pub output: f64,
    pub method: ShapleyMethod,
}

impl Attribution {
    /// `|base + sum - output|`; zero up to rounding for exact enumeration.
    pub fn efficiency_gap(&self) -> f64 {
        (self.base + self.values.iter().map(|g| g.value).sum::<f64>() - self.output).abs()
    }
}

/// Exact Shapley values of an `n`-player game given `v` on every coalition
/// bitmask (`v.len() == 2^n`).
pub fn shapley_exact(n: usize, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), 1 << n);
    // weight[s] = s! (n - s - 1)! / n!
    let mut weight = vec![0.0; n.max(1)];
    for (s, w) in weight.iter_mut().enumerate().take(n) {
        *w = 1.0 / (n as f64 * binom(n - 1, s));
    }
    let mut phi = vec![0.0; n];
    for mask in 0..v.len() {
        let size = (mask as u32).count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if mask & (1 << i) == 0 {
                *p += weight[size] * (v[mask | (1 << i)] - v[mask]);
            }
        }
    }
    phi
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Monte Carlo estimate: each player gets `budget / n` random permutations
/// and averages its marginal contribution. Efficiency holds only in the limit.
pub fn shapley_sampled<F, R>(n: usize, mut v: F, budget: usize, rng: &mut R) -> Vec<f64>
where
    F: FnMut(&[bool]) -> f64,
    R: Rng + ?Sized,
{
    let per = (budget / n.max(1)).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut mask = vec![false; n];
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for _ in 0..per {
                order.shuffle(rng);
                mask.iter_mut().for_each(|m| *m = false);
                for &j in order.iter().take_while(|&&j| j != i) {
                    mask[j] = true;
                }
                let without = v(&mask);
                mask[i] = true;
                acc += v(&mask) - without;
            }
            acc / per as f64
        })
        .collect()
}

fn compose(
    x: &FeatureVector,
    baseline: &FeatureVector,
    groups: &[FeatureGroup],
    on: impl Fn(usize) -> bool,
) -> FeatureVector {
    let mut z = *baseline;
    for (g, grp) in groups.iter().enumerate() {
        if on(g) {
            for &i in &grp.indices {
                z.0[i] = x.0[i];
            }
        }
    }
    z
}

pub const DEFAULT_BUDGET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapleyMode {
    /// Exact for at most twelve groups, sampled with `budget` otherwise.
    Auto {
        budget: usize,
    },
    Sampled {
        budget: usize,
    },
}

impl Default for ShapleyMode {
    fn default() -> Self {
        ShapleyMode::Auto {
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Attributes Q(greedy action) at step `t` of `prefix` across `groups`.
/// Sampling draws from a stream keyed by `seed` and `t`.
pub fn attribute(
    net: &QNetwork,
    prefix: &[FeatureVector],
    t: usize,
    baseline: &FeatureVector,
    groups: &[FeatureGroup],
    mode: ShapleyMode,
    seed: u64,
) -> Result<Attribution> {
    if t >= prefix.len() {
        return Err(Error::TimestepOutOfRange {
            t,
            len: prefix.len(),
        });
    }
    let mut h = net.initial_hidden();
    for x in &prefix[..t] {
        h = net.forward(&x.0, &h)?.1;
    }
    let x = &prefix[t];
    let q_true = net.forward(&x.0, &h)?.0;
    let action = QNetwork::greedy(&q_true);
    let a = action.index();
    let q = |z: &FeatureVector| -> f64 { net.step(&z.0, &h).q[a] };
    let n = groups.len();
    let base = q(baseline);
    let sample_budget = match mode {
        ShapleyMode::Auto { .. } if n <= MAX_EXACT_GROUPS => None,
        ShapleyMode::Auto { budget } | ShapleyMode::Sampled { budget } => Some(budget),
    };
    let (phi, method) = if let Some(budget) = sample_budget {
        let mut rng: StreamRng = stream_rng(seed, &[t as u64]);
        let phi = shapley_sampled(
            n,
            |m| q(&compose(x, baseline, groups, |g| m[g])),
            budget,
            &mut rng,
        );
        (phi, ShapleyMethod::Sampled { samples: budget })
    } else {
        let v: Vec<f64> = (0..1usize << n)
            .map(|mask| q(&compose(x, baseline, groups, |g| mask & (1 << g) != 0)))
            .collect();
        (shapley_exact(n, &v), ShapleyMethod::Exact)
    };
    Ok(Attribution {
        t,
        action,
        values: groups
            .iter()
            .zip(phi)
            .map(|(g, value)| GroupValue {
                name: g.name.clone(),
                value,
            })
            .collect(),
        base,
        output: q_true[a],
        method,
    })
}
