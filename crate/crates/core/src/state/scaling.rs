//! Linear scaling with clipping, calibrated from simulated races.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::*;
use super::unified::{translate, UnifiedRaceState};
use crate::baselines::FixedPolicy;
use crate::env::{Environment, Policy, RaceEnv};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::sim::{Compound, TrackConfig, TrackId};
use crate::util::{percentile, sha256_hex};

pub const PROFILE_VERSION: u32 = 1;

/// Positions are scaled against a full 20-car grid whatever the field size.
pub const POSITION_BOUNDS: (f64, f64) = (1.0, 20.0);
pub const LLR_CLAMP: (f64, f64) = (0.0, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub feature: ScaledFeature,
    pub lo: f64,
    pub hi: f64,
    pub target_lo: f64,
    pub target_hi: f64,
}

impl FeatureScale {
    fn new(feature: ScaledFeature, lo: f64, hi: f64) -> Self {
        let (target_lo, target_hi) = feature.target();
        FeatureScale {
            feature,
            lo,
            hi,
            target_lo,
            target_hi,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        let c = x.clamp(self.lo, self.hi);
        if c == self.hi {
            return self.target_hi;
        }
        self.target_lo + (c - self.lo) * (self.target_hi - self.target_lo) / (self.hi - self.lo)
    }

    pub fn invert(&self, s: f64) -> f64 {
        self.lo + (s - self.target_lo) * (self.hi - self.lo) / (self.target_hi - self.target_lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingProfile {
    pub version: u32,
    /// Tracks whose races produced the bounds.
    pub tracks: Vec<TrackId>,
    pub n_sims: usize,
    pub seed: u64,
    /// One entry per [`ScaledFeature`], in `ScaledFeature::ALL` order.
    pub scales: Vec<FeatureScale>,
    pub llr_clamp: (f64, f64),
    /// Reference input for attributions: median of continuous and boolean
    /// entries, most frequent value of each one-hot block.
    pub baseline: FeatureVector,
}

impl ScalingProfile {
    /// Profile with explicit bounds and an all-zero baseline.
    pub fn from_bounds(bounds: [(f64, f64); 5]) -> Self {
        let scales = ScaledFeature::ALL
            .iter()
            .zip(bounds)
            .map(|(&f, (lo, hi))| FeatureScale::new(f, lo, hi))
            .collect();
        ScalingProfile {
            version: PROFILE_VERSION,
            tracks: Vec::new(),
            n_sims: 0,
            seed: 0,
            scales,
            llr_clamp: LLR_CLAMP,
            baseline: FeatureVector::zeros(),
        }
    }

    pub fn scale_of(&self, f: ScaledFeature) -> &FeatureScale {
        self.scales
            .iter()
            .find(|s| s.feature == f)
            .expect("profile covers every scaled feature")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PROFILE_VERSION {
            return Err(Error::ProfileMismatch {
                expected: format!("version {PROFILE_VERSION}"),
                found: format!("version {}", self.version),
            });
        }
        for f in ScaledFeature::ALL {
            let Some(s) = self.scales.iter().find(|s| s.feature == f) else {
                return Err(Error::Format(format!("profile lacks {f:?}")));
            };
            if !s.lo.is_finite() || !s.hi.is_finite() || s.lo >= s.hi {
                return Err(Error::Format(format!(
                    "profile bounds for {f:?} are not increasing"
                )));
            }
            if (s.target_lo, s.target_hi) != f.target() {
                return Err(Error::Format(format!(
                    "profile target interval for {f:?} altered"
                )));
            }
        }
        Ok(())
    }

    /// Content hash; checkpoints record it to pin the profile they were trained with.
    pub fn fingerprint(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("profile serializes")
                .as_bytes(),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: ScalingProfile = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
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

    /// Raw value of a scaled entry, for display.
    pub fn unscale(&self, f: ScaledFeature, scaled: f64) -> f64 {
        self.scale_of(f).invert(scaled)
    }
}

fn raw_value(state: &UnifiedRaceState, f: ScaledFeature) -> f64 {
    match f {
        ScaledFeature::Position => state.position as f64,
        ScaledFeature::TyreDegradation => state.tyre_degradation,
        ScaledFeature::GapAhead => state.gap_ahead,
        ScaledFeature::GapBehind => state.gap_behind,
        ScaledFeature::GapToLeader => state.gap_to_leader,
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn scale(state: &UnifiedRaceState, profile: &ScalingProfile) -> FeatureVector {
    let mut v = [0.0; FEATURE_LEN];
    v[TRACK.start + state.track.index()] = 1.0;
    v[SAFETY_CAR.start + state.safety_car.index()] = 1.0;
    v[PROGRESS] = state.race_progress.clamp(0.0, 1.0);
    v[TYRE.start + state.current_tyre.index()] = 1.0;
    v[SOFT_AVAILABLE] = flag(state.soft_available);
    v[MEDIUM_AVAILABLE] = flag(state.medium_available);
    v[HARD_AVAILABLE] = flag(state.hard_available);
    let (llo, lhi) = profile.llr_clamp;
    v[LAST_LAP_TO_REFERENCE] = state.last_lap_to_reference.clamp(llo, lhi);
    v[VALID_FINISH] = flag(state.valid_finish);
    for s in &profile.scales {
        v[s.feature.index()] = s.apply(raw_value(state, s.feature));
    }
    FeatureVector(v)
}

/// Bounds from the 1st and 99th percentiles of every car's state over
/// `n_sims` races per track, with the controlled car on the track's fixed
/// strategy pool. Position bounds are analytic.
pub fn calibrate_scaling(
    configs: &[TrackConfig],
    n_sims: usize,
    seed: u64,
) -> Result<ScalingProfile> {
    if n_sims == 0 || configs.is_empty() {
        return Err(Error::NoCalibrationRuns);
    }
    let mut states = Vec::new();
    for config in configs {
        for i in 0..n_sims {
            let race_seed = derive_seed(
                seed,
                &[stream::CALIBRATE, config.track_id.index() as u64, i as u64],
            );
            collect_race(config, race_seed, &mut states)?;
        }
    }
    let mut bounds = [POSITION_BOUNDS; 5];
    for (k, f) in ScaledFeature::ALL.iter().enumerate().skip(1) {
        let mut xs: Vec<f64> = states.iter().map(|s| raw_value(s, *f)).collect();
        xs.sort_by(f64::total_cmp);
        let lo = percentile(&xs, 0.01);
        let mut hi = percentile(&xs, 0.99);
        if hi <= lo {
            hi = lo + 1.0;
        }
        bounds[k] = (lo, hi);
    }
    let mut profile = ScalingProfile::from_bounds(bounds);
    profile.tracks = configs.iter().map(|c| c.track_id).collect();
    profile.n_sims = n_sims;
    profile.seed = seed;
    let scaled: Vec<FeatureVector> = states.iter().map(|s| scale(s, &profile)).collect();
    profile.baseline = baseline_vector(&scaled);
    Ok(profile)
}

/// Every car's state at every lap boundary of one race.
fn collect_race(config: &TrackConfig, seed: u64, out: &mut Vec<UnifiedRaceState>) -> Result<()> {
    let mut policy = FixedPolicy::for_track(config)?;
    policy.begin_race(config, seed);
    let mut env = RaceEnv::new(config.clone());
    let mut state = env.reset_with(seed, policy.starting_compound())?;
    loop {
        let sim = env.sim().expect("race in progress");
        for id in 0..sim.cars.len() {
            out.push(translate(sim, config, id)?);
        }
        let tr = env.step(policy.act(&state))?;
        state = tr.state;
        if tr.terminal {
            break;
        }
    }
    Ok(())
}

fn baseline_vector(rows: &[FeatureVector]) -> FeatureVector {
    let mut b = [0.0; FEATURE_LEN];
    for g in fine_groups() {
        match g.kind {
            FeatureKind::OneHot => {
                let mut counts = vec![0usize; g.indices.len()];
                for r in rows {
                    if let Some(k) = g.indices.iter().position(|&i| r.0[i] == 1.0) {
                        counts[k] += 1;
                    }
                }
                let best = (0..counts.len())
                    .max_by_key(|&k| (counts[k], std::cmp::Reverse(k)))
                    .unwrap_or(0);
                b[g.indices[best]] = 1.0;
            }
            FeatureKind::Boolean => {
                for &i in &g.indices {
                    let ones = rows.iter().filter(|r| r.0[i] == 1.0).count();
                    b[i] = flag(2 * ones > rows.len());
                }
            }
            FeatureKind::Continuous => {
                for &i in &g.indices {
                    let mut xs: Vec<f64> = rows.iter().map(|r| r.0[i]).collect();
                    xs.sort_by(f64::total_cmp);
                    b[i] = percentile(&xs, 0.5);
                }
            }
        }
    }
    FeatureVector(b)
}

/// One-hot position of a compound in the tyre block.
pub fn tyre_index(c: Compound) -> usize {
    TYRE.start + c.index()
}
