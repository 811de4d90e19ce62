//! Paired-seed evaluation of policies, generalisation matrices, strategy
//! summaries, pace calibration and CSV reports.

mod pace;
pub mod report;
mod summary;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use pace::{calibrate_pace, PaceCalibration};
pub use summary::{executed_strategy, strategy_summary, StopStats, StrategySummary};

use crate::agent::policy::{AgentPolicy, RandomPolicy};
use crate::agent::QNetwork;
use crate::baselines::{FixedPolicy, HeuristicParams, HeuristicPolicy};
use crate::env::{run_race, Policy, RaceResult};
use crate::error::Result;
use crate::rng::{derive_seed, stream};
use crate::sim::{TrackConfig, TrackId};
use crate::state::ScalingProfile;
use crate::util::{mean, median, std_dev};

/// Seed of the `i`-th evaluation race under `master`. Every model sees the
/// same sequence.
pub fn race_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, &[stream::EVAL, i as u64])
}

type MakePolicy = dyn Fn(&TrackConfig) -> Result<Box<dyn Policy>> + Send + Sync;

/// A named recipe for fresh policy instances.
#[derive(Clone)]
pub struct Model {
    pub name: String,
    /// Tracks the model was trained on, if it is a learned model.
    pub trained_on: Option<Vec<TrackId>>,
    make: Arc<MakePolicy>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("name", &self.name)
            .field("trained_on", &self.trained_on)
            .finish()
    }
}

impl Model {
    pub fn new(
        name: impl Into<String>,
        make: impl Fn(&TrackConfig) -> Result<Box<dyn Policy>> + Send + Sync + 'static,
    ) -> Self {
        Model {
            name: name.into(),
            trained_on: None,
            make: Arc::new(make),
        }
    }

    /// The track's shipped strategy pool.
    pub fn fixed() -> Self {
        Model::new("fixed", |c| Ok(Box::new(FixedPolicy::for_track(c)?)))
    }

    pub fn heuristic(params: HeuristicParams) -> Self {
        Model::new("heuristic", move |_| {
            Ok(Box::new(HeuristicPolicy::new(params.clone())))
        })
    }

    pub fn random() -> Self {
        Model::new("random", |_| Ok(Box::new(RandomPolicy::default())))
    }

    pub fn agent(
        name: impl Into<String>,
        net: Arc<QNetwork>,
        profile: Arc<ScalingProfile>,
    ) -> Self {
        let name = name.into();
        let label = name.clone();
        Model::new(name, move |_| {
            Ok(Box::new(AgentPolicy::new(
                label.clone(),
                net.clone(),
                profile.clone(),
            )))
        })
    }

    pub fn trained_on(mut self, tracks: Vec<TrackId>) -> Self {
        self.trained_on = Some(tracks);
        self
    }

    pub fn policy(&self, config: &TrackConfig) -> Result<Box<dyn Policy>> {
        (self.make)(config)
    }
}

/// Runs `n` races in parallel on the shared seed sequence.
pub fn run_races(
    config: &TrackConfig,
    model: &Model,
    n: usize,
    master_seed: u64,
    keep_trace: bool,
) -> Result<Vec<RaceResult>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut policy = model.policy(config)?;
            run_race(
                config,
                policy.as_mut(),
                race_seed(master_seed, i),
                keep_trace,
            )
        })
        .collect()
}

/// Aggregate outcome of one model on one track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub mean_finish: f64,
    pub std_finish: f64,
    pub median_finish: f64,
    /// `distribution[p - 1]` races finished in position `p`.
    pub distribution: Vec<usize>,
    /// Share of races ending with the failure penalty.
    pub failure_rate: f64,
    pub mean_pits: f64,
    pub mean_reward: f64,
    /// Executed strategies in pit-window notation, failures excluded.
    pub strategies: BTreeMap<String, usize>,
}

impl EvalMetrics {
    pub fn from_results(results: &[RaceResult], field_size: usize) -> Self {
        let finishes: Vec<f64> = results.iter().map(|r| r.finish as f64).collect();
        let mut distribution = vec![0; field_size];
        let mut strategies = BTreeMap::new();
        for r in results {
            distribution[r.finish - 1] += 1;
            if !r.failed {
                *strategies
                    .entry(executed_strategy(r.start, &r.pits))
                    .or_insert(0) += 1;
            }
        }
        let n = results.len();
        EvalMetrics {
            n,
            mean_finish: mean(&finishes),
            std_finish: std_dev(&finishes),
            median_finish: median(&finishes),
            distribution,
            failure_rate: results.iter().filter(|r| r.failed).count() as f64 / n as f64,
            mean_pits: mean(
                &results
                    .iter()
                    .map(|r| r.pits.len() as f64)
                    .collect::<Vec<_>>(),
            ),
            mean_reward: mean(&results.iter().map(|r| r.total_reward).collect::<Vec<_>>()),
            strategies,
        }
    }
}

/// Greedy evaluation of a network on one track.
pub fn evaluate(
    net: Arc<QNetwork>,
    profile: Arc<ScalingProfile>,
    config: &TrackConfig,
    n: usize,
    seed: u64,
) -> Result<EvalMetrics> {
    let model = Model::agent("rsrl", net, profile);
    let results = run_races(config, &model, n, seed, false)?;
    Ok(EvalMetrics::from_results(&results, config.field.size))
}

#[derive(Debug, Clone)]
pub struct ComparisonSpec {
    pub models: Vec<Model>,
    pub tracks: Vec<TrackConfig>,
    pub n_races: usize,
    pub seed: u64,
    /// Overrides every track's controlled-car pace when set.
    pub pace_delta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub track: TrackId,
    /// Whether the track was in the model's training set; `None` for
    /// non-learned models.
    pub seen: Option<bool>,
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    /// Per-race outcomes as `(model, track, seed, finish, failed, pits, reward)`.
    pub races: Vec<RaceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceRow {
    pub model: String,
    pub track: TrackId,
    pub race: usize,
    pub seed: u64,
    pub finish: usize,
    pub failed: bool,
    pub pits: usize,
    pub reward: f64,
    pub strategy: String,
}

impl ResultsTable {
    pub fn row(&self, model: &str, track: TrackId) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.track == track)
    }
}

pub fn run_comparison(spec: &ComparisonSpec) -> Result<ResultsTable> {
    let mut table = ResultsTable::default();
    for base in &spec.tracks {
        let mut config = base.clone();
        if let Some(p) = spec.pace_delta {
            config.field.controlled_pace_delta = p;
        }
        for model in &spec.models {
            let results = run_races(&config, model, spec.n_races, spec.seed, false)?;
            for (i, r) in results.iter().enumerate() {
                table.races.push(RaceRow {
                    model: model.name.clone(),
                    track: config.track_id,
                    race: i,
                    seed: r.seed,
                    finish: r.finish,
                    failed: r.failed,
                    pits: r.pits.len(),
                    reward: r.total_reward,
                    strategy: executed_strategy(r.start, &r.pits),
                });
            }
            table.rows.push(ResultRow {
                model: model.name.clone(),
                track: config.track_id,
                seen: model
                    .trained_on
                    .as_ref()
                    .map(|t| t.contains(&config.track_id)),
                metrics: EvalMetrics::from_results(&results, config.field.size),
            });
        }
    }
    Ok(table)
}

/// One model's row of the generalisation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub model: String,
    /// Mean finish per track, in the order of [`GeneralisationMatrix::tracks`].
    pub means: Vec<f64>,
    pub seen_avg: Option<f64>,
    pub unseen_avg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralisationMatrix {
    pub tracks: Vec<TrackId>,
    pub rows: Vec<MatrixRow>,
    /// Races per cell.
    pub n: usize,
}

impl GeneralisationMatrix {
    /// `|tracks|` mean columns plus the seen and unseen averages.
    pub fn columns(&self) -> usize {
        self.tracks.len() + 2
    }

    /// Seen and unseen average deltas of `model` against `reference`
    /// (positive means `model` finishes ahead).
    pub fn deltas(&self, model: &str, reference: &str) -> (Option<f64>, Option<f64>) {
        let get = |m: &str| self.rows.iter().find(|r| r.model == m);
        let (Some(a), Some(b)) = (get(model), get(reference)) else {
            return (None, None);
        };
        let pair = |x: Option<f64>, y: Option<f64>| Some(y? - x?);
        (
            pair(a.seen_avg, b.seen_avg),
            pair(a.unseen_avg, b.unseen_avg),
        )
    }
}

pub fn generalisability_matrix(
    models: &[Model],
    tracks: &[TrackConfig],
    n: usize,
    seed: u64,
) -> Result<GeneralisationMatrix> {
    let spec = ComparisonSpec {
        models: models.to_vec(),
        tracks: tracks.to_vec(),
        n_races: n,
        seed,
        pace_delta: None,
    };
    let table = run_comparison(&spec)?;
    let ids: Vec<TrackId> = tracks.iter().map(|t| t.track_id).collect();
    let rows = models
        .iter()
        .map(|m| {
            let means: Vec<f64> = ids
                .iter()
                .map(|&t| {
                    table
                        .row(&m.name, t)
                        .expect("cell evaluated")
                        .metrics
                        .mean_finish
                })
                .collect();
            let split = |want: bool| {
                let trained = m.trained_on.as_ref()?;
                let xs: Vec<f64> = ids
                    .iter()
                    .zip(&means)
                    .filter(|(t, _)| trained.contains(t) == want)
                    .map(|(_, &v)| v)
                    .collect();
                (!xs.is_empty()).then(|| mean(&xs))
            };
            MatrixRow {
                model: m.name.clone(),
                seen_avg: split(true),
                unseen_avg: split(false),
                means,
            }
        })
        .collect();
    Ok(GeneralisationMatrix {
        tracks: ids,
        rows,
        n,
    })
}
