//! Explanations: Shapley attributions, VIPER trees and tree counterfactuals.

pub mod counterfactual;
pub mod fidelity;
pub mod shapley;
pub mod tree;
pub mod viper;

pub use counterfactual::{
    counterfactual, counterfactual_proximity, CfOptions, Change, Counterfactual, Norm, Note,
    Proximity, CF_EPSILON,
};
pub use fidelity::{
    attribution_fidelity, surrogate_fidelity, AttributionFidelity, SurrogateReport,
};
pub use shapley::{
    attribute, shapley_exact, shapley_sampled, Attribution, GroupValue, ShapleyMethod, ShapleyMode,
};
pub use tree::{
    accuracy, decision_path, fit_cart, CartParams, DecisionPath, DecisionTree, LeafPath, Node,
    PathStep, Predicate,
};
pub use viper::{
    depth_curve, viper_distill, DepthRow, IterationRow, Sample, ViperConfig, ViperResult,
};
