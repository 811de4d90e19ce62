//! Frozen layout of the model input vector.
//!
//! ```text
//!  0..14  track one-hot (TrackId order)
//! 14..17  safety car one-hot (Full, Virtual, None)
//! 17      scaled position            [0, 1]
//! 18      race progress              [0, 1]
//! 19..22  current tyre one-hot (Soft, Medium, Hard)
//! 22      scaled tyre degradation    [0, 1]
//! 23      soft available             {0, 1}
//! 24      medium available           {0, 1}
//! 25      hard available             {0, 1}
//! 26      scaled gap ahead           [-1, 1]
//! 27      scaled gap behind          [-1, 1]
//! 28      scaled gap to leader       [-1, 1]
//! 29      last lap to reference      [0, 2]
//! 30      valid finish               {0, 1}
//! ```

use std::ops::{Index, Range};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::sim::{Compound, SafetyCar, TrackId};

pub const N_TRACKS: usize = 14;
pub const TRACK: Range<usize> = 0..14;
pub const SAFETY_CAR: Range<usize> = 14..17;
pub const POSITION: usize = 17;
pub const PROGRESS: usize = 18;
pub const TYRE: Range<usize> = 19..22;
pub const DEGRADATION: usize = 22;
pub const SOFT_AVAILABLE: usize = 23;
pub const MEDIUM_AVAILABLE: usize = 24;
pub const HARD_AVAILABLE: usize = 25;
pub const GAP_AHEAD: usize = 26;
pub const GAP_BEHIND: usize = 27;
pub const GAP_TO_LEADER: usize = 28;
pub const LAST_LAP_TO_REFERENCE: usize = 29;
pub const VALID_FINISH: usize = 30;
pub const FEATURE_LEN: usize = N_TRACKS + 17;

/// Scaled model input. Always `FEATURE_LEN` long, in the layout above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(#[serde(with = "fixed")] pub [f64; FEATURE_LEN]);

mod fixed {
    use super::FEATURE_LEN;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; FEATURE_LEN], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; FEATURE_LEN], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"31 features"))
    }
}

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector([0.0; FEATURE_LEN])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        v.try_into().ok().map(FeatureVector)
    }

    pub fn track(&self) -> Option<TrackId> {
        argmax_block(&self.0[TRACK]).and_then(|i| TrackId::ALL.get(i).copied())
    }

    pub fn safety_car(&self) -> Option<SafetyCar> {
        argmax_block(&self.0[SAFETY_CAR]).map(|i| SafetyCar::ALL[i])
    }

    pub fn tyre(&self) -> Option<Compound> {
        argmax_block(&self.0[TYRE]).and_then(Compound::from_index)
    }
}

impl Index<usize> for FeatureVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn argmax_block(block: &[f64]) -> Option<usize> {
    block.iter().position(|&v| v == 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    OneHot,
    Boolean,
    Continuous,
}

/// Raw quantities that are linearly scaled before entering the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScaledFeature {
    Position,
    TyreDegradation,
    GapAhead,
    GapBehind,
    GapToLeader,
}

impl ScaledFeature {
    pub const ALL: [ScaledFeature; 5] = [
        ScaledFeature::Position,
        ScaledFeature::TyreDegradation,
        ScaledFeature::GapAhead,
        ScaledFeature::GapBehind,
        ScaledFeature::GapToLeader,
    ];

    pub fn index(self) -> usize {
        match self {
            ScaledFeature::Position => POSITION,
            ScaledFeature::TyreDegradation => DEGRADATION,
            ScaledFeature::GapAhead => GAP_AHEAD,
            ScaledFeature::GapBehind => GAP_BEHIND,
            ScaledFeature::GapToLeader => GAP_TO_LEADER,
        }
    }

    pub fn target(self) -> (f64, f64) {
        match self {
            ScaledFeature::Position | ScaledFeature::TyreDegradation => (0.0, 1.0),
            _ => (-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureInfo {
    pub index: usize,
    /// Machine name, stable across versions.
    pub name: String,
    /// Formal symbol as used in decision paths, e.g. `s_rp`.
    pub symbol: String,
    /// Human-readable label of the raw (unscaled) quantity.
    pub display: String,
    pub kind: FeatureKind,
    /// Raw quantity this entry scales, if any.
    pub scaled: Option<ScaledFeature>,
}

pub fn feature_layout() -> &'static [FeatureInfo] {
    static LAYOUT: OnceLock<Vec<FeatureInfo>> = OnceLock::new();
    LAYOUT.get_or_init(|| {
        let mut v = Vec::with_capacity(FEATURE_LEN);
        let mut push = |name: String, symbol: String, display: String, kind, scaled| {
            let index = v.len();
            v.push(FeatureInfo {
                index,
                name,
                symbol,
                display,
                kind,
                scaled,
            });
        };
        for t in TrackId::ALL {
            push(
                format!("track_{}", t.code()),
                format!("s_track = {}", t.code()),
                format!("Track = {}", t.name()),
                FeatureKind::OneHot,
                None,
            );
        }
        for sc in SafetyCar::ALL {
            push(
                format!("safety_car_{}", sc.to_string().to_lowercase()),
                format!("s_sc = {sc}"),
                format!("Safety Car = {sc}"),
                FeatureKind::OneHot,
                None,
            );
        }
        push(
            "scaled_position".into(),
            "s_pos".into(),
            "Position".into(),
            FeatureKind::Continuous,
            Some(ScaledFeature::Position),
        );
        push(
            "race_progress".into(),
            "s_rp".into(),
            "Race Progress".into(),
            FeatureKind::Continuous,
            None,
        );
        for c in Compound::ALL {
            push(
                format!("tyre_{}", c.to_string().to_lowercase()),
                format!("s_tyre = {c}"),
                format!("Current Tyre = {c}"),
                FeatureKind::OneHot,
                None,
            );
        }
        push(
            "scaled_tyre_degradation".into(),
            "s_td".into(),
            "Tyre Degradation".into(),
            FeatureKind::Continuous,
            Some(ScaledFeature::TyreDegradation),
        );
        for c in Compound::ALL {
            let lower = c.to_string().to_lowercase();
            push(
                format!("{lower}_available"),
                format!("s_{lower}"),
                format!("{c} Available"),
                FeatureKind::Boolean,
                None,
            );
        }
        for (name, sym, disp, f) in [
            (
                "scaled_gap_ahead",
                "s_ga",
                "Gap Ahead",
                ScaledFeature::GapAhead,
            ),
            (
                "scaled_gap_behind",
                "s_gb",
                "Gap Behind",
                ScaledFeature::GapBehind,
            ),
            (
                "scaled_gap_to_leader",
                "s_gl",
                "Gap To Leader",
                ScaledFeature::GapToLeader,
            ),
        ] {
            push(
                name.into(),
                sym.into(),
                disp.into(),
                FeatureKind::Continuous,
                Some(f),
            );
        }
        push(
            "last_lap_to_reference".into(),
            "s_llr".into(),
            "Last Lap To Reference".into(),
            FeatureKind::Continuous,
            None,
        );
        push(
            "valid_finish".into(),
            "s_vf".into(),
            "Valid Finish".into(),
            FeatureKind::Boolean,
            None,
        );
        assert_eq!(v.len(), FEATURE_LEN);
        v
    })
}

/// Hash of the frozen feature ordering, stored in checkpoints.
pub fn layout_hash() -> String {
    let names: Vec<&str> = feature_layout().iter().map(|f| f.name.as_str()).collect();
    crate::util::sha256_hex(names.join(",").as_bytes())
}

/// A block of feature-vector entries treated as one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub indices: Vec<usize>,
    pub kind: FeatureKind,
}

fn group(name: &str, indices: impl IntoIterator<Item = usize>, kind: FeatureKind) -> FeatureGroup {
    FeatureGroup {
        name: name.to_string(),
        indices: indices.into_iter().collect(),
        kind,
    }
}

/// The twelve attribution groups. Race progress is labelled as the lap number
/// for display; the three availability flags form one group.
pub fn attribution_groups() -> Vec<FeatureGroup> {
    use FeatureKind::*;
    vec![
        group("Track", TRACK, OneHot),
        group("Safety Car", SAFETY_CAR, OneHot),
        group("Position", [POSITION], Continuous),
        group("Lap Number", [PROGRESS], Continuous),
        group("Current Tyre", TYRE, OneHot),
        group("Tyre Degradation", [DEGRADATION], Continuous),
        group(
            "Tyres Available",
            [SOFT_AVAILABLE, MEDIUM_AVAILABLE, HARD_AVAILABLE],
            Boolean,
        ),
        group("Gap Ahead", [GAP_AHEAD], Continuous),
        group("Gap Behind", [GAP_BEHIND], Continuous),
        group("Gap To Leader", [GAP_TO_LEADER], Continuous),
        group("Last Lap To Reference", [LAST_LAP_TO_REFERENCE], Continuous),
        group("Valid Finish", [VALID_FINISH], Boolean),
    ]
}

/// One group per state-space row: fourteen groups, availability split.
pub fn fine_groups() -> Vec<FeatureGroup> {
    let mut g = attribution_groups();
    let avail = g.remove(6);
    for (k, idx) in avail.indices.into_iter().enumerate() {
        let name = format!("{} Available", Compound::ALL[k]);
        g.insert(6 + k, group(&name, [idx], FeatureKind::Boolean));
    }
    g
}

/// Units a counterfactual may edit: one-hot blocks flip atomically, booleans
/// take 0 or 1, continuous entries move freely.
pub fn edit_units() -> Vec<FeatureGroup> {
    fine_groups()
}
