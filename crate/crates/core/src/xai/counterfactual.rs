//! Closest-leaf counterfactuals for an axis-aligned tree.
//!
//! For every leaf predicting the target, `x` is projected onto the leaf's box
//! one edit unit at a time: continuous entries are clamped (`> t` lands at
//! `t + CF_EPSILON`), booleans pick a feasible 0/1, and one-hot blocks flip to
//! a feasible category as a whole. The cheapest projection wins; ties go to
//! the leftmost leaf.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, LeafPath};
use crate::action::Action;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::state::{
    edit_units, feature_layout, features, FeatureGroup, FeatureKind, FeatureVector, ScalingProfile,
    FEATURE_LEN,
};

pub const CF_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L1,
    L2,
}

impl Norm {
    pub fn distance(self, a: &FeatureVector, b: &FeatureVector) -> f64 {
        let d = a.0.iter().zip(&b.0).map(|(x, y)| x - y);
        match self {
            Norm::L1 => d.map(f64::abs).sum(),
            Norm::L2 => d.map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// Additive per-unit cost whose total orders candidates like `distance`.
    fn cost(self, deltas: impl Iterator<Item = f64>) -> f64 {
        match self {
            Norm::L1 => deltas.map(f64::abs).sum(),
            Norm::L2 => deltas.map(|v| v * v).sum(),
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            _ => Err(Error::Format(format!("unknown norm `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfOptions {
    pub norm: Norm,
    /// Feature indices that may not change; a unit touching any is frozen.
    pub immutable: Vec<usize>,
}

impl Default for CfOptions {
    fn default() -> Self {
        CfOptions {
            norm: Norm::L1,
            immutable: features::TRACK.collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub feature: usize,
    pub name: String,
    pub from: f64,
    pub to: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub original: FeatureVector,
    pub target: Action,
    pub modified: FeatureVector,
    pub changes: Vec<Change>,
    /// Edit units touched; a one-hot flip counts once.
    pub units_changed: usize,
    pub norm: Norm,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub text: String,
    /// The strategist can bring this about by waiting.
    pub actionable: bool,
}

type Bounds = ([f64; FEATURE_LEN], [f64; FEATURE_LEN]);

/// Exclusive lower and inclusive upper bound per feature.
fn leaf_box(leaf: &LeafPath) -> Bounds {
    let mut lo = [f64::NEG_INFINITY; FEATURE_LEN];
    let mut hi = [f64::INFINITY; FEATURE_LEN];
    for p in &leaf.predicates {
        if p.le {
            hi[p.feature] = hi[p.feature].min(p.threshold);
        } else {
            lo[p.feature] = lo[p.feature].max(p.threshold);
        }
    }
    (lo, hi)
}

fn inside(v: f64, lo: f64, hi: f64) -> bool {
    v > lo && v <= hi
}

/// Cheapest in-box values for one unit, or `None` if the unit cannot comply.
fn project_unit(
    x: &FeatureVector,
    unit: &FeatureGroup,
    (lo, hi): &Bounds,
    frozen: bool,
    norm: Norm,
) -> Option<Vec<f64>> {
    let cur: Vec<f64> = unit.indices.iter().map(|&i| x.0[i]).collect();
    let ok = |vals: &[f64]| {
        unit.indices
            .iter()
            .zip(vals)
            .all(|(&i, &v)| inside(v, lo[i], hi[i]))
    };
    if ok(&cur) {
        return Some(cur);
    }
    if frozen {
        return None;
    }
    let candidates: Vec<Vec<f64>> = match unit.kind {
        FeatureKind::Continuous => {
            let i = unit.indices[0];
            let v = if x.0[i] > hi[i] {
                hi[i]
            } else {
                lo[i] + CF_EPSILON
            };
            vec![vec![v]]
        }
        FeatureKind::Boolean => vec![vec![0.0], vec![1.0]],
        FeatureKind::OneHot => (0..unit.indices.len())
            .map(|k| {
                (0..unit.indices.len())
                    .map(|j| if j == k { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect(),
    };
    candidates
        .into_iter()
        .filter(|c| ok(c))
        .map(|c| {
            let cost = norm.cost(c.iter().zip(&cur).map(|(a, b)| a - b));
            (cost, c)
        })
        .fold(
            None,
            |best: Option<(f64, Vec<f64>)>, (cost, c)| match best {
                Some((b, _)) if b <= cost => best,
                _ => Some((cost, c)),
            },
        )
        .map(|(_, c)| c)
}

/// Closest input the tree classifies as `target`.
pub fn counterfactual(
    tree: &DecisionTree,
    x: &FeatureVector,
    target: Action,
    opts: &CfOptions,
) -> Result<Counterfactual> {
    if tree.predict(x) == target {
        return Err(Error::TargetAlreadyPredicted);
    }
    let units = edit_units();
    let frozen: Vec<bool> = units
        .iter()
        .map(|u| u.indices.iter().any(|i| opts.immutable.contains(i)))
        .collect();
    let mut best: Option<(f64, FeatureVector)> = None;
    for leaf in tree.leaves().iter().filter(|l| l.action == target) {
        let bounds = leaf_box(leaf);
        let mut z = *x;
        let mut feasible = true;
        for (u, unit) in units.iter().enumerate() {
            match project_unit(x, unit, &bounds, frozen[u], opts.norm) {
                Some(vals) => {
                    for (&i, v) in unit.indices.iter().zip(vals) {
                        z.0[i] = v;
                    }
                }
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible || tree.predict(&z) != target {
            continue;
        }
        let d = opts.norm.distance(x, &z);
        if best.as_ref().is_none_or(|(b, _)| d < *b) {
            best = Some((d, z));
        }
    }
    let (distance, modified) = best.ok_or_else(|| Error::NoReachableLeaf(target.to_string()))?;
    let layout = feature_layout();
    let changes: Vec<Change> = (0..FEATURE_LEN)
        .filter(|&i| modified.0[i] != x.0[i])
        .map(|i| Change {
            feature: i,
            name: layout[i].name.clone(),
            from: x.0[i],
            to: modified.0[i],
            delta: modified.0[i] - x.0[i],
        })
        .collect();
    let units_changed = units
        .iter()
        .filter(|u| u.indices.iter().any(|&i| modified.0[i] != x.0[i]))
        .count();
    Ok(Counterfactual {
        original: *x,
        target,
        modified,
        changes,
        units_changed,
        norm: opts.norm,
        distance,
    })
}

impl Counterfactual {
    /// One line per changed unit in raw units, e.g. "complete 4.503 more laps".
    pub fn notes(&self, profile: &ScalingProfile, total_laps: u32) -> Vec<Note> {
        let layout = feature_layout();
        let mut out = Vec::new();
        for unit in edit_units() {
            if !unit
                .indices
                .iter()
                .any(|&i| self.modified.0[i] != self.original.0[i])
            {
                continue;
            }
            let i = unit.indices[0];
            let info = &layout[i];
            let note = match unit.kind {
                FeatureKind::OneHot => {
                    let pick = |v: &FeatureVector| {
                        unit.indices
                            .iter()
                            .find(|&&k| v.0[k] == 1.0)
                            .map(|&k| {
                                layout[k]
                                    .display
                                    .rsplit(" = ")
                                    .next()
                                    .unwrap_or("?")
                                    .to_string()
                            })
                            .unwrap_or_else(|| "?".into())
                    };
                    Note {
                        text: format!(
                            "{}: {} -> {}",
                            unit.name,
                            pick(&self.original),
                            pick(&self.modified)
                        ),
                        actionable: false,
                    }
                }
                FeatureKind::Boolean => Note {
                    text: format!(
                        "{}: {} -> {}",
                        info.display,
                        yes_no(self.original.0[i]),
                        yes_no(self.modified.0[i])
                    ),
                    actionable: false,
                },
                FeatureKind::Continuous if i == features::PROGRESS => {
                    let laps = (self.modified.0[i] - self.original.0[i]) * total_laps as f64;
                    if laps > 0.0 {
                        Note {
                            text: format!("complete {laps:.3} more laps"),
                            actionable: true,
                        }
                    } else {
                        Note {
                            text: format!("be {:.3} laps earlier in the race", -laps),
                            actionable: false,
                        }
                    }
                }
                FeatureKind::Continuous => {
                    let raw = |s: f64| info.scaled.map(|f| profile.unscale(f, s)).unwrap_or(s);
                    Note {
                        text: format!(
                            "{} from {:.3} to {:.3}",
                            info.display,
                            raw(self.original.0[i]),
                            raw(self.modified.0[i])
                        ),
                        actionable: false,
                    }
                }
            };
            out.push(note);
        }
        out
    }
}

fn yes_no(v: f64) -> &'static str {
    if v >= 0.5 {
        "yes"
    } else {
        "no"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proximity {
    pub n: usize,
    /// Draws with no reachable target leaf.
    pub skipped: usize,
    pub mean_units_changed: f64,
    pub mean_distance: f64,
}

/// Averages over `n` draws of a state from `states` and a random action the
/// tree does not already predict there.
pub fn counterfactual_proximity(
    tree: &DecisionTree,
    states: &[FeatureVector],
    n: usize,
    seed: u64,
    opts: &CfOptions,
) -> Proximity {
    let mut rng = stream_rng(seed, &[]);
    let (mut changed, mut dist, mut got, mut skipped) = (0usize, 0.0, 0usize, 0usize);
    if states.is_empty() {
        return Proximity {
            n: 0,
            skipped: 0,
            mean_units_changed: 0.0,
            mean_distance: 0.0,
        };
    }
    for _ in 0..n {
        let x = &states[rng.random_range(0..states.len())];
        let current = tree.predict(x);
        let others: Vec<Action> = Action::ALL.into_iter().filter(|a| *a != current).collect();
        let target = others[rng.random_range(0..others.len())];
        match counterfactual(tree, x, target, opts) {
            Ok(cf) => {
                changed += cf.units_changed;
                dist += cf.distance;
                got += 1;
            }
            Err(_) => skipped += 1,
        }
    }
    let m = got.max(1) as f64;
    Proximity {
        n: got,
        skipped,
        mean_units_changed: changed as f64 / m,
        mean_distance: dist / m,
    }
}
