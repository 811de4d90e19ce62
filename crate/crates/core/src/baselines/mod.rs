//! Non-learning comparison policies.

pub mod fixed;
pub mod heuristic;
pub mod strategy;

pub use fixed::FixedPolicy;
pub use heuristic::{heuristic_action, HeuristicParams, HeuristicPolicy};
pub use strategy::{parse_pool, parse_strategy, PitWindow, PlannedStop, StrategyPlan};
