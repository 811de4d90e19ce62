//! Pit-stop strategy with recurrent Q-learning on an open race simulator,
//! plus comparison baselines and explanation tools.

pub mod action;
pub mod agent;
pub mod baselines;
pub mod env;
pub mod error;
pub mod harness;
pub mod rng;
pub mod sim;
pub mod state;
mod util;
pub mod xai;

pub use action::Action;
pub use error::{Error, Result};
