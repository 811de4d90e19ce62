//! VIPER: DAgger-style distillation of the Q-network into a CART tree.

use std::io::Write;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{accuracy, fit_cart, CartParams, DecisionTree};
use crate::action::Action;
use crate::agent::{AgentPolicy, QNetwork, N_ACTIONS};
use crate::env::{run_race, Policy, RaceResult};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, label_hash, stream_rng};
use crate::sim::{Compound, TrackConfig};
use crate::state::{FeatureVector, ScalingProfile, UnifiedRaceState};

/// One oracle-labelled state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: FeatureVector,
    pub label: Action,
    /// `max_a Q - min_a Q`: how much the choice matters here.
    pub weight: f64,
}

pub fn q_gap(q: &[f64; N_ACTIONS]) -> f64 {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Drives the car with `tree` (or the oracle when there is none) while the
/// oracle follows along and labels every state.
pub struct Labeller {
    oracle: AgentPolicy,
    tree: Option<Arc<DecisionTree>>,
    pub samples: Vec<Sample>,
}

impl Labeller {
    pub fn new(
        oracle: Arc<QNetwork>,
        profile: Arc<ScalingProfile>,
        tree: Option<Arc<DecisionTree>>,
    ) -> Self {
        Labeller {
            oracle: AgentPolicy::new("oracle", oracle, profile),
            tree,
            samples: Vec::new(),
        }
    }
}

impl Policy for Labeller {
    fn name(&self) -> String {
        "viper".into()
    }

    fn begin_race(&mut self, config: &TrackConfig, seed: u64) {
        self.oracle.begin_race(config, seed);
    }

    fn starting_compound(&self) -> Option<Compound> {
        None
    }

    fn act(&mut self, state: &UnifiedRaceState) -> Action {
        let label = self.oracle.act(state);
        let q = self.oracle.last_q().expect("oracle acted");
        let x = *self.oracle.inputs().last().expect("oracle acted");
        self.samples.push(Sample {
            x,
            label,
            weight: q_gap(&q),
        });
        match &self.tree {
            Some(t) => t.predict(&x),
            None => label,
        }
    }
}

/// Oracle-labelled states from `n` races, driven by `tree` if given.
pub fn collect(
    oracle: &Arc<QNetwork>,
    profile: &Arc<ScalingProfile>,
    config: &TrackConfig,
    tree: Option<Arc<DecisionTree>>,
    seeds: impl IntoIterator<Item = u64>,
) -> Result<(Vec<Sample>, Vec<RaceResult>)> {
    let mut lab = Labeller::new(oracle.clone(), profile.clone(), tree);
    let mut races = Vec::new();
    for seed in seeds {
        races.push(run_race(config, &mut lab, seed, false)?);
    }
    Ok((lab.samples, races))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViperConfig {
    pub iterations: usize,
    pub races_per_iter: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Oracle races whose states form the held-out set.
    pub holdout_races: usize,
    pub seed: u64,
}

impl Default for ViperConfig {
    fn default() -> Self {
        ViperConfig {
            iterations: 25,
            races_per_iter: 10,
            max_depth: 5,
            min_leaf: 5,
            holdout_races: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub dataset_size: usize,
    pub train_accuracy: f64,
    pub heldout_fidelity: f64,
    pub depth: usize,
    pub leaves: usize,
}

#[derive(Debug, Clone)]
pub struct ViperResult {
    pub tree: DecisionTree,
    pub best_iteration: usize,
    pub history: Vec<IterationRow>,
    pub dataset: Vec<Sample>,
    pub holdout: Vec<Sample>,
}

impl ViperResult {
    pub fn heldout_fidelity(&self) -> f64 {
        self.history[self.best_iteration].heldout_fidelity
    }
}

fn split(samples: &[Sample]) -> (Vec<FeatureVector>, Vec<Action>) {
    samples.iter().map(|s| (s.x, s.label)).unzip()
}

/// Draws `samples.len()` points with probability proportional to weight.
pub fn resample<R: Rng + ?Sized>(samples: &[Sample], rng: &mut R) -> Vec<Sample> {
    match WeightedIndex::new(samples.iter().map(|s| s.weight.max(0.0))) {
        Ok(dist) => (0..samples.len())
            .map(|_| samples[dist.sample(rng)].clone())
            .collect(),
        // every weight zero: fall back to the unweighted set
        Err(_) => samples.to_vec(),
    }
}

pub fn viper_distill(
    oracle: Arc<QNetwork>,
    profile: Arc<ScalingProfile>,
    config: &TrackConfig,
    cfg: &ViperConfig,
) -> Result<ViperResult> {
    if cfg.iterations == 0 {
        return Err(Error::ZeroIterations);
    }
    let key = label_hash("viper");
    let holdout_seeds =
        (0..cfg.holdout_races as u64).map(|i| derive_seed(cfg.seed, &[key, u64::MAX, i]));
    let (holdout, _) = collect(&oracle, &profile, config, None, holdout_seeds)?;
    let (hx, hy) = split(&holdout);
    let params = CartParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
    };
    let mut rng = stream_rng(cfg.seed, &[key]);
    let mut dataset: Vec<Sample> = Vec::new();
    let mut history = Vec::new();
    let mut trees: Vec<DecisionTree> = Vec::new();
    let mut current: Option<Arc<DecisionTree>> = None;
    for it in 0..cfg.iterations {
        let seeds =
            (0..cfg.races_per_iter as u64).map(|r| derive_seed(cfg.seed, &[key, it as u64, r]));
        let (fresh, _) = collect(&oracle, &profile, config, current.clone(), seeds)?;
        dataset.extend(fresh);
        let (xs, ys) = split(&resample(&dataset, &mut rng));
        let mut tree = fit_cart(&xs, &ys, params);
        tree.meta.iterations = it + 1;
        tree.meta.dataset_size = dataset.len();
        let (dx, dy) = split(&dataset);
        history.push(IterationRow {
            iteration: it,
            dataset_size: dataset.len(),
            train_accuracy: accuracy(&tree, &dx, &dy),
            heldout_fidelity: accuracy(&tree, &hx, &hy),
            depth: tree.depth(),
            leaves: tree.n_leaves(),
        });
        current = Some(Arc::new(tree.clone()));
        trees.push(tree);
    }
    let best_iteration = history.iter().enumerate().fold(0, |b, (i, r)| {
        if r.heldout_fidelity > history[b].heldout_fidelity {
            i
        } else {
            b
        }
    });
    Ok(ViperResult {
        tree: trees.swap_remove(best_iteration),
        best_iteration,
        history,
        dataset,
        holdout,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
    pub leaves: usize,
}

/// Refits the aggregated dataset at each depth.
pub fn depth_curve(
    dataset: &[Sample],
    holdout: &[Sample],
    depths: impl IntoIterator<Item = usize>,
    min_leaf: usize,
    seed: u64,
) -> Vec<DepthRow> {
    let mut rng = stream_rng(seed, &[label_hash("viper-depth")]);
    let (xs, ys) = split(&resample(dataset, &mut rng));
    let (dx, dy) = split(dataset);
    let (hx, hy) = split(holdout);
    depths
        .into_iter()
        .map(|depth| {
            let t = fit_cart(
                &xs,
                &ys,
                CartParams {
                    max_depth: depth,
                    min_leaf,
                },
            );
            DepthRow {
                depth,
                train_accuracy: accuracy(&t, &dx, &dy),
                heldout_accuracy: accuracy(&t, &hx, &hy),
                leaves: t.n_leaves(),
            }
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

pub fn write_depth_csv<W: Write>(rows: &[DepthRow], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_history_csv<W: Write>(rows: &[IterationRow], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::NetShape;
    use crate::state::{features, FEATURE_LEN, POSITION_BOUNDS};

    fn profile() -> Arc<ScalingProfile> {
        Arc::new(ScalingProfile::from_bounds([
            POSITION_BOUNDS,
            (0.0, 4.0),
            (0.0, 20.0),
            (0.0, 20.0),
            (0.0, 80.0),
        ]))
    }

    /// Q = [0, 0, 0, 20 (progress - 0.5)]: pits for hards past half distance.
    fn threshold_oracle() -> Arc<QNetwork> {
        let d = FEATURE_LEN;
        let mut net = QNetwork::zeros(NetShape {
            input: d,
            hidden: 1,
            dense: 1,
            q_scale: 1.0,
        });
        // z gate pinned shut so h = tanh(w x + b) each step
        let b_ih = 3 * d + 3;
        net.params[b_ih + 1] = -50.0;
        net.params[2 * d + features::PROGRESS] = 4.0;
        net.params[b_ih + 2] = -2.0;
        let wd = 3 * d + 9;
        net.params[wd] = 1.0;
        let wo = wd + 2;
        net.params[wo + 3] = 20.0;
        Arc::new(net)
    }

    #[test]
    fn realisable_oracle_is_matched_exactly() {
        let cfg = ViperConfig {
            iterations: 3,
            races_per_iter: 2,
            holdout_races: 2,
            ..ViperConfig::default()
        };
        let r = viper_distill(threshold_oracle(), profile(), &TrackConfig::desk(), &cfg).unwrap();
        assert_eq!(r.heldout_fidelity(), 1.0);
        assert!(r.holdout.iter().any(|s| s.label == Action::PitHard));
        assert!(r.holdout.iter().any(|s| s.label == Action::NoPit));
        let sizes: Vec<usize> = r.history.iter().map(|h| h.dataset_size).collect();
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.tree.depth() <= 5);
    }

    #[test]
    fn zero_iterations_rejected() {
        let cfg = ViperConfig {
            iterations: 0,
            ..ViperConfig::default()
        };
        assert!(matches!(
            viper_distill(threshold_oracle(), profile(), &TrackConfig::desk(), &cfg),
            Err(Error::ZeroIterations)
        ));
    }

    #[test]
    fn weights_shift_resample() {
        let mk = |w, a| Sample {
            x: FeatureVector::zeros(),
            label: a,
            weight: w,
        };
        let data = vec![mk(0.0, Action::NoPit), mk(1.0, Action::PitHard)];
        let r = resample(&data, &mut stream_rng(1, &[]));
        assert!(r.iter().all(|s| s.label == Action::PitHard));
        let flat = vec![mk(0.0, Action::NoPit); 3];
        assert_eq!(resample(&flat, &mut stream_rng(1, &[])).len(), 3);
    }
}
