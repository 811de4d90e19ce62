//! Open Monte Carlo race simulator: a field of cars advanced lap by lap with
//! an additive lap-time model, tyre degradation, pit stops, safety cars and
//! traffic.

mod field;
mod state;
pub mod trace;
mod track;
mod types;

pub use field::{build_field, strategy_pool, Field};
pub use state::{
    lap_time, CarState, Gaps, GridSlot, LapDraws, LapRecord, LapReport, PolicyTag, SimState,
    FOLLOW_GAP,
};
pub use track::{FieldConfig, TrackConfig};
pub use types::{Compound, PerCompound, SafetyCar, TrackId};
