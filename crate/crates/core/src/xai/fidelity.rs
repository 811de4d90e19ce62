//! Fidelity metrics for the three explanation methods.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::shapley::{attribute, ShapleyMode};
use super::tree::DecisionTree;
use super::viper::collect;
use crate::action::Action;
use crate::agent::{QNetwork, RewardSpec};
use crate::error::Result;
use crate::rng::{derive_seed, label_hash, stream_rng};
use crate::sim::TrackConfig;
use crate::state::{FeatureGroup, FeatureVector, ScalingProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    /// Rows are oracle actions, columns tree predictions, in action order.
    pub confusion: [[usize; Action::COUNT]; Action::COUNT],
    pub n: usize,
    pub accuracy: f64,
    /// Mean F1 over actions that occur as a label or a prediction.
    pub macro_f1: f64,
}

impl SurrogateReport {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Action, Action)>) -> Self {
        let mut confusion = [[0; Action::COUNT]; Action::COUNT];
        for (truth, pred) in pairs {
            confusion[truth.index()][pred.index()] += 1;
        }
        let n: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..Action::COUNT).map(|i| confusion[i][i]).sum();
        let mut f1s = Vec::new();
        for c in 0..Action::COUNT {
            let tp = confusion[c][c] as f64;
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|r| r[c]).sum();
            if support + predicted == 0 {
                continue;
            }
            f1s.push(2.0 * tp / (support + predicted) as f64);
        }
        SurrogateReport {
            confusion,
            n,
            accuracy: if n == 0 { 0.0 } else { trace as f64 / n as f64 },
            macro_f1: if f1s.is_empty() {
                0.0
            } else {
                f1s.iter().sum::<f64>() / f1s.len() as f64
            },
        }
    }
}

/// Tree versus oracle on every lap of `n_sims` oracle-driven races.
pub fn surrogate_fidelity(
    tree: &DecisionTree,
    oracle: Arc<QNetwork>,
    profile: Arc<ScalingProfile>,
    config: &TrackConfig,
    n_sims: usize,
    seed: u64,
) -> Result<SurrogateReport> {
    let key = label_hash("surrogate");
    let seeds = (0..n_sims as u64).map(|i| derive_seed(seed, &[key, i]));
    let (samples, _) = collect(&oracle, &profile, config, None, seeds)?;
    Ok(SurrogateReport::from_pairs(
        samples.iter().map(|s| (s.label, tree.predict(&s.x))),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionFidelity {
    pub n: usize,
    /// Mean `|base + sum(phi) - Q(chosen)|` in reward units.
    pub mae: f64,
    /// `mae` over the largest single reward.
    pub normalised: f64,
}

/// Reconstruction error of attributions at `n_timesteps` steps drawn
/// uniformly from `n_sims` greedy races.
#[allow(clippy::too_many_arguments)]
pub fn attribution_fidelity(
    net: Arc<QNetwork>,
    profile: Arc<ScalingProfile>,
    config: &TrackConfig,
    groups: &[FeatureGroup],
    mode: ShapleyMode,
    n_timesteps: usize,
    n_sims: usize,
    seed: u64,
) -> Result<AttributionFidelity> {
    let key = label_hash("attribution");
    let seeds = (0..n_sims as u64).map(|i| derive_seed(seed, &[key, i]));
    let (_, races) = collect(&net, &profile, config, None, seeds)?;
    let episodes: Vec<Vec<FeatureVector>> = races
        .iter()
        .map(|r| {
            r.states[..r.actions.len()]
                .iter()
                .map(|s| crate::state::scale(s, &profile))
                .collect()
        })
        .collect();
    let mut rng = stream_rng(seed, &[key]);
    let total: usize = episodes.iter().map(Vec::len).sum();
    let mut err = 0.0;
    for k in 0..n_timesteps {
        let mut pick = rng.random_range(0..total);
        let ep = episodes
            .iter()
            .find(|e| {
                if pick < e.len() {
                    true
                } else {
                    pick -= e.len();
                    false
                }
            })
            .expect("pick within total");
        let a = attribute(
            &net,
            ep,
            pick,
            &profile.baseline,
            groups,
            mode,
            derive_seed(seed, &[key, k as u64]),
        )?;
        err += a.efficiency_gap();
    }
    let mae = err / n_timesteps.max(1) as f64;
    Ok(AttributionFidelity {
        n: n_timesteps,
        mae,
        normalised: mae / RewardSpec::default().max_terminal(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::NetShape;
    use crate::state::{attribution_groups, fine_groups, FEATURE_LEN, POSITION_BOUNDS};

    #[test]
    fn perfect_agreement_is_diagonal() {
        let pairs = Action::ALL
            .iter()
            .flat_map(|&a| std::iter::repeat_n((a, a), 3));
        let r = SurrogateReport::from_pairs(pairs);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                assert_eq!(c, if i == j { 3 } else { 0 });
            }
        }
    }

    #[test]
    fn accuracy_is_trace_over_total() {
        use Action::*;
        let pairs = [
            (NoPit, NoPit),
            (NoPit, NoPit),
            (NoPit, PitHard),
            (PitHard, PitHard),
            (PitSoft, NoPit),
        ];
        let r = SurrogateReport::from_pairs(pairs);
        assert_eq!(r.n, 5);
        assert_eq!(r.accuracy, 3.0 / 5.0);
        assert_eq!(r.confusion[0], [2, 0, 0, 1]);
        // F1: NoPit 2*2/(3+3), PitSoft 0, PitHard 2*1/(1+2)
        let want = (4.0 / 6.0 + 0.0 + 2.0 / 3.0) / 3.0;
        assert!((r.macro_f1 - want).abs() < 1e-12);
    }

    #[test]
    fn exact_mode_reconstructs_and_sampling_does_not() {
        let net = Arc::new(QNetwork::init(
            NetShape {
                input: FEATURE_LEN,
                hidden: 4,
                dense: 4,
                q_scale: 100.0,
            },
            &mut stream_rng(2, &[]),
        ));
        let mut profile = ScalingProfile::from_bounds([
            POSITION_BOUNDS,
            (0.0, 4.0),
            (0.0, 20.0),
            (0.0, 20.0),
            (0.0, 80.0),
        ]);
        profile.baseline.0[crate::state::features::PROGRESS] = 0.5;
        let profile = Arc::new(profile);
        let cfg = TrackConfig::desk();
        let exact = attribution_fidelity(
            net.clone(),
            profile.clone(),
            &cfg,
            &attribution_groups(),
            ShapleyMode::default(),
            10,
            2,
            1,
        )
        .unwrap();
        assert!(exact.mae < 1e-9);
        let sampled = attribution_fidelity(
            net,
            profile,
            &cfg,
            &fine_groups(),
            ShapleyMode::Sampled { budget: 28 },
            10,
            2,
            1,
        )
        .unwrap();
        assert!(sampled.mae > 0.0);
        assert!((sampled.normalised - sampled.mae / 2500.0).abs() < 1e-15);
    }
}
