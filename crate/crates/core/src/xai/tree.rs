//! Axis-aligned CART classifier over feature vectors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{Error, Result};
use crate::state::{feature_layout, FeatureKind, FeatureVector, ScalingProfile, FEATURE_LEN};

pub const TREE_FORMAT: &str = "pitwall-tree";
pub const TREE_VERSION: u32 = 1;
pub const DEFAULT_MAX_DEPTH: usize = 5;
pub const DEFAULT_MIN_LEAF: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        action: Action,
        counts: [usize; Action::COUNT],
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeMeta {
    pub iterations: usize,
    pub dataset_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub format: String,
    pub version: u32,
    pub max_depth: usize,
    pub meta: TreeMeta,
    pub root: Node,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub feature: usize,
    pub threshold: f64,
    /// `x <= threshold` when true, `x > threshold` otherwise.
    pub le: bool,
}

impl Predicate {
    pub fn holds(&self, x: &FeatureVector) -> bool {
        (x.0[self.feature] <= self.threshold) == self.le
    }
}

/// A leaf with the predicates that reach it.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPath {
    pub predicates: Vec<Predicate>,
    pub action: Action,
    pub counts: [usize; Action::COUNT],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            max_depth: DEFAULT_MAX_DEPTH,
            min_leaf: DEFAULT_MIN_LEAF,
        }
    }
}

impl DecisionTree {
    pub fn leaf(action: Action) -> Self {
        let mut counts = [0; Action::COUNT];
        counts[action.index()] = 1;
        DecisionTree::from_root(Node::Leaf { action, counts }, 0)
    }

    pub fn from_root(root: Node, max_depth: usize) -> Self {
        DecisionTree {
            format: TREE_FORMAT.into(),
            version: TREE_VERSION,
            max_depth,
            meta: TreeMeta::default(),
            root,
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> Action {
        let mut node = &self.root;
        loop {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x.0[*feature] <= *threshold {
                        left
                    } else {
                        right
                    }
                }
                Node::Leaf { action, .. } => return *action,
            }
        }
    }

    /// Root-to-leaf predicates satisfied by `x`, and the leaf's action.
    pub fn path(&self, x: &FeatureVector) -> (Vec<Predicate>, Action) {
        let mut out = Vec::new();
        let mut node = &self.root;
        loop {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let le = x.0[*feature] <= *threshold;
                    out.push(Predicate {
                        feature: *feature,
                        threshold: *threshold,
                        le,
                    });
                    node = if le { left } else { right };
                }
                Node::Leaf { action, .. } => return (out, *action),
            }
        }
    }

    /// Every leaf in left-to-right order.
    pub fn leaves(&self) -> Vec<LeafPath> {
        fn walk(node: &Node, path: &mut Vec<Predicate>, out: &mut Vec<LeafPath>) {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    for (le, child) in [(true, left), (false, right)] {
                        path.push(Predicate {
                            feature: *feature,
                            threshold: *threshold,
                            le,
                        });
                        walk(child, path, out);
                        path.pop();
                    }
                }
                Node::Leaf { action, counts } => out.push(LeafPath {
                    predicates: path.clone(),
                    action: *action,
                    counts: *counts,
                }),
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        fn d(n: &Node) -> usize {
            match n {
                Node::Split { left, right, .. } => 1 + d(left).max(d(right)),
                Node::Leaf { .. } => 0,
            }
        }
        d(&self.root)
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != TREE_FORMAT || self.version != TREE_VERSION {
            return Err(Error::Format(format!(
                "tree {} v{}",
                self.format, self.version
            )));
        }
        if self.depth() > self.max_depth {
            return Err(Error::Format(format!(
                "depth {} exceeds max {}",
                self.depth(),
                self.max_depth
            )));
        }
        for leaf in self.leaves() {
            for p in &leaf.predicates {
                if !p.threshold.is_finite() || p.feature >= FEATURE_LEN {
                    return Err(Error::Format(format!("bad split on feature {}", p.feature)));
                }
            }
            // A leaf is reachable when its box is non-empty.
            let mut lo = [f64::NEG_INFINITY; FEATURE_LEN];
            let mut hi = [f64::INFINITY; FEATURE_LEN];
            for p in &leaf.predicates {
                if p.le {
                    hi[p.feature] = hi[p.feature].min(p.threshold);
                } else {
                    lo[p.feature] = lo[p.feature].max(p.threshold);
                }
            }
            if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
                return Err(Error::Format("unreachable leaf".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: DecisionTree = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn gini(counts: &[usize; Action::COUNT], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize; Action::COUNT]) -> Action {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

/// Fits a tree by greedy Gini splits. Thresholds sit midway between
/// adjacent distinct values; ties go to the lower feature index, then the
/// lower threshold, so the result depends only on the data.
pub fn fit_cart(xs: &[FeatureVector], ys: &[Action], params: CartParams) -> DecisionTree {
    assert_eq!(xs.len(), ys.len());
    let idx: Vec<usize> = (0..xs.len()).collect();
    let root = grow(xs, ys, idx, 0, params);
    let mut t = DecisionTree::from_root(root, params.max_depth);
    t.meta.dataset_size = xs.len();
    t
}

fn grow(xs: &[FeatureVector], ys: &[Action], idx: Vec<usize>, depth: usize, p: CartParams) -> Node {
    let mut counts = [0; Action::COUNT];
    for &i in &idx {
        counts[ys[i].index()] += 1;
    }
    let leaf = Node::Leaf {
        action: majority(&counts),
        counts,
    };
    let n = idx.len();
    if depth >= p.max_depth || n < 2 * p.min_leaf.max(1) || counts.contains(&n) {
        return leaf;
    }
    let parent = gini(&counts, n);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.clone();
    for f in 0..FEATURE_LEN {
        order.sort_by(|&a, &b| xs[a].0[f].total_cmp(&xs[b].0[f]));
        let mut left = [0; Action::COUNT];
        for k in 0..n - 1 {
            left[ys[order[k]].index()] += 1;
            let (v, next) = (xs[order[k]].0[f], xs[order[k + 1]].0[f]);
            let nl = k + 1;
            if v == next || nl < p.min_leaf || n - nl < p.min_leaf {
                continue;
            }
            let mut right = counts;
            for c in 0..Action::COUNT {
                right[c] -= left[c];
            }
            let impurity =
                (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
            if best.is_none_or(|(b, _, _)| impurity < b - 1e-12) {
                best = Some((impurity, f, 0.5 * (v + next)));
            }
        }
    }
    match best {
        Some((impurity, feature, threshold)) if impurity < parent - 1e-12 => {
            let (l, r): (Vec<usize>, Vec<usize>) = idx
                .into_iter()
                .partition(|&i| xs[i].0[feature] <= threshold);
            Node::Split {
                feature,
                threshold,
                left: Box::new(grow(xs, ys, l, depth + 1, p)),
                right: Box::new(grow(xs, ys, r, depth + 1, p)),
            }
        }
        _ => leaf,
    }
}

/// Fraction of `xs` on which the tree predicts `ys`.
pub fn accuracy(tree: &DecisionTree, xs: &[FeatureVector], ys: &[Action]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let hits = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| tree.predict(x) == **y)
        .count();
    hits as f64 / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub feature: usize,
    pub name: String,
    pub le: bool,
    /// Threshold in model (scaled) units.
    pub threshold: f64,
    /// Threshold in display units; equal to `threshold` unless inverted.
    pub display_threshold: f64,
    /// Scaling was inverted for display.
    pub inverted: bool,
    pub formal: String,
    pub natural: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPath {
    pub steps: Vec<PathStep>,
    pub action: Action,
}

/// The predicates `x` satisfies from root to leaf, with scaled features shown
/// in raw units (marked `*`).
pub fn decision_path(
    tree: &DecisionTree,
    x: &FeatureVector,
    profile: &ScalingProfile,
) -> DecisionPath {
    let (preds, action) = tree.path(x);
    let layout = feature_layout();
    let steps = preds
        .into_iter()
        .map(|p| {
            let info = &layout[p.feature];
            let op = if p.le { "≤" } else { ">" };
            let (display_threshold, inverted) = match info.scaled {
                Some(f) => (profile.unscale(f, p.threshold), true),
                None => (p.threshold, false),
            };
            let (formal, natural) = match info.kind {
                FeatureKind::OneHot | FeatureKind::Boolean => {
                    // Entries are 0/1, so `<= t` for t in (0, 1) means "off".
                    let on = !p.le;
                    let formal = if on {
                        info.symbol.clone()
                    } else {
                        format!("¬({})", info.symbol)
                    };
                    let natural = match (info.kind, on) {
                        (FeatureKind::OneHot, true) => one_hot_value(&info.display).to_string(),
                        (FeatureKind::OneHot, false) => {
                            format!("No {}", one_hot_value(&info.display))
                        }
                        (_, true) => info.display.clone(),
                        (_, false) => format!("Not {}", info.display),
                    };
                    (formal, natural)
                }
                FeatureKind::Continuous => (
                    format!("{} {op} {:.3}", info.symbol, p.threshold),
                    format!(
                        "{}{} {op} {:.3}",
                        if inverted { "*" } else { "" },
                        info.display,
                        display_threshold
                    ),
                ),
            };
            PathStep {
                feature: p.feature,
                name: info.name.clone(),
                le: p.le,
                threshold: p.threshold,
                display_threshold,
                inverted,
                formal,
                natural,
            }
        })
        .collect();
    DecisionPath { steps, action }
}

/// `"Current Tyre = Hard"` -> `"Hard"`.
fn one_hot_value(display: &str) -> &str {
    display.rsplit(" = ").next().unwrap_or(display)
}
