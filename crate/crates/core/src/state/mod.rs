//! Translation from simulator snapshots to the agent's scaled input.

pub mod features;
mod scaling;
mod unified;

pub use features::{
    attribution_groups, edit_units, feature_layout, fine_groups, layout_hash, FeatureGroup,
    FeatureInfo, FeatureKind, FeatureVector, ScaledFeature, FEATURE_LEN,
};
pub use scaling::{
    calibrate_scaling, scale, tyre_index, FeatureScale, ScalingProfile, LLR_CLAMP, POSITION_BOUNDS,
    PROFILE_VERSION,
};
pub use unified::{
    translate, GameTelemetryTranslator, LiveTimingTranslator, SimTranslator, TraceTranslator,
    Translator, UnifiedRaceState,
};
