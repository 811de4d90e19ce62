//! Model checkpoints.
//!
//! A checkpoint is one JSON object:
//!
//! ```text
//! {
//!   "format": "pitwall-drqn",
//!   "version": 1,
//!   "training": { ...TrainingConfig... },
//!   "feature_layout": "<sha256 of the comma-joined feature names>",
//!   "profile_fingerprint": "<sha256 of the profile JSON>",
//!   "profile": { ...ScalingProfile... },
//!   "network": { "shape": {input, hidden, dense, q_scale}, "params": [f64...] }
//! }
//! ```
//!
//! `params` uses the flat layout documented in [`super::network`]. Floats are
//! written with shortest round-trip formatting, so a reload is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::QNetwork;
use super::train::TrainingConfig;
use crate::error::{Error, Result};
use crate::state::{layout_hash, ScalingProfile};

pub const CHECKPOINT_FORMAT: &str = "pitwall-drqn";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub training: TrainingConfig,
    pub feature_layout: String,
    pub profile_fingerprint: String,
    pub profile: ScalingProfile,
    pub network: QNetwork,
}

impl Checkpoint {
    pub fn new(network: QNetwork, profile: ScalingProfile, training: TrainingConfig) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            training,
            feature_layout: layout_hash(),
            profile_fingerprint: profile.fingerprint(),
            profile,
            network,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{} v{}",
                self.format, self.version
            )));
        }
        if self.feature_layout != layout_hash() {
            return Err(Error::Checkpoint(
                "feature layout differs from this build".into(),
            ));
        }
        self.profile.validate()?;
        let found = self.profile.fingerprint();
        if found != self.profile_fingerprint {
            return Err(Error::ProfileMismatch {
                expected: self.profile_fingerprint.clone(),
                found,
            });
        }
        if self.network.params.len() != self.network.shape.param_count() {
            return Err(Error::Checkpoint(format!(
                "{} parameters for a shape needing {}",
                self.network.params.len(),
                self.network.shape.param_count()
            )));
        }
        Ok(())
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

    /// Refuses to run the model under a different scaling profile.
    pub fn require_profile(&self, profile: &ScalingProfile) -> Result<()> {
        let found = profile.fingerprint();
        if found != self.profile_fingerprint {
            return Err(Error::ProfileMismatch {
                expected: self.profile_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }
}
