use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{Compound, PerCompound, TrackId};
use crate::error::{Error, Result};

/// Composition of the simulated field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// Number of cars including the controlled one.
    pub size: usize,
    /// Pace step between consecutive opponents (s/lap).
    pub pace_spread: f64,
    /// Pace of the controlled car relative to the field median (s/lap).
    pub controlled_pace_delta: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            size: 20,
            pace_spread: 0.15,
            controlled_pace_delta: -0.7,
        }
    }
}

/// Per-track simulator parameters. Loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    pub track_id: TrackId,
    pub total_laps: u32,
    /// Green-flag lap time of a median car on fresh softs with no fuel (s).
    pub reference_lap_time: f64,
    /// Time lost by a pit stop under green flag (s).
    pub pit_loss: f64,
    #[serde(default = "defaults::sc_factor")]
    pub pit_loss_sc_factor: f64,
    #[serde(default = "defaults::vsc_factor")]
    pub pit_loss_vsc_factor: f64,
    /// Seconds per lap of fuel still on board.
    pub fuel_effect: f64,
    #[serde(default = "defaults::lap_noise_sd")]
    pub lap_noise_sd: f64,
    pub sc_deploy_prob: f64,
    pub sc_duration_mean: f64,
    pub vsc_share: f64,
    #[serde(default = "defaults::sc_pace")]
    pub sc_pace_factor: f64,
    #[serde(default = "defaults::vsc_pace")]
    pub vsc_pace_factor: f64,
    /// Pace advantage (s/lap) needed to pass the car ahead.
    pub overtake_threshold: f64,
    /// Seconds lost on a lap spent stuck behind a slower car.
    pub traffic_penalty: f64,
    /// Interval behind the leader after a full safety car bunches the field.
    #[serde(default = "defaults::sc_gap")]
    pub sc_gap: f64,
    /// Extra lap-one time per grid slot (s).
    #[serde(default = "defaults::start_gap")]
    pub start_gap: f64,
    pub compound_offset: PerCompound<f64>,
    pub deg_rate: PerCompound<f64>,
    pub cliff_age: PerCompound<u32>,
    /// Sets per car at race start, including the starting set.
    pub tyre_allocation: PerCompound<u32>,
    #[serde(default)]
    pub field: FieldConfig,
    /// Published candidate strategies for this track, in strategy notation.
    #[serde(default)]
    pub strategies: Vec<String>,
}

mod defaults {
    pub fn sc_factor() -> f64 {
        0.5
    }
    pub fn vsc_factor() -> f64 {
        0.75
    }
    pub fn lap_noise_sd() -> f64 {
        0.25
    }
    pub fn sc_pace() -> f64 {
        1.4
    }
    pub fn vsc_pace() -> f64 {
        1.2
    }
    pub fn sc_gap() -> f64 {
        1.0
    }
    pub fn start_gap() -> f64 {
        0.25
    }
}

macro_rules! bundled {
    ($($id:ident => $file:literal),* $(,)?) => {
        fn bundled_source(track: TrackId) -> &'static str {
            match track {
                $(TrackId::$id => include_str!(concat!("../../tracks/", $file)),)*
            }
        }
    };
}

bundled! {
    JPN => "jpn.toml",
    BHR => "bhr.toml",
    AZE => "aze.toml",
    GBR => "gbr.toml",
    HUN => "hun.toml",
    ITA => "ita.toml",
    SGP => "sgp.toml",
    QAT => "qat.toml",
    ABU => "abu.toml",
    SPN => "spn.toml",
    SAU => "sau.toml",
    AUT => "aut.toml",
    MEX => "mex.toml",
    USA => "usa.toml",
}

const DESK_SOURCE: &str = include_str!("../../tracks/desk.toml");

impl TrackConfig {
    /// Shipped default parameters for a supported track.
    pub fn bundled(track: TrackId) -> TrackConfig {
        Self::from_toml_str(bundled_source(track)).expect("bundled track config is valid")
    }

    /// Shortened 20-lap, 10-car race used for quick experiments and tests.
    pub fn desk() -> TrackConfig {
        Self::from_toml_str(DESK_SOURCE).expect("bundled desk config is valid")
    }

    /// Resolves a name: a track code, `desk`, or a path to a TOML file.
    pub fn resolve(name: &str) -> Result<TrackConfig> {
        if name.eq_ignore_ascii_case("desk") {
            return Ok(Self::desk());
        }
        if let Ok(id) = name.parse::<TrackId>() {
            return Ok(Self::bundled(id));
        }
        Self::load(name)
    }

    pub fn from_toml_str(s: &str) -> Result<TrackConfig> {
        let cfg: TrackConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrackConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidConfig {
                track: self.track_id,
                reason: reason.to_string(),
            })
        };
        if self.total_laps < 1 {
            return fail("total_laps must be at least 1");
        }
        if self.reference_lap_time.is_nan() || self.reference_lap_time <= 0.0 {
            return fail("reference_lap_time must be positive");
        }
        if self.pit_loss.is_nan() || self.pit_loss <= 0.0 {
            return fail("pit_loss must be positive");
        }
        for (name, f) in [
            ("pit_loss_sc_factor", self.pit_loss_sc_factor),
            ("pit_loss_vsc_factor", self.pit_loss_vsc_factor),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return fail(&format!("{name} must lie in (0, 1]"));
            }
        }
        if self.sc_pace_factor < 1.0 || self.vsc_pace_factor < 1.0 {
            return fail("safety-car pace factors must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.sc_deploy_prob) || !(0.0..=1.0).contains(&self.vsc_share) {
            return fail("probabilities must lie in [0, 1]");
        }
        if self.lap_noise_sd < 0.0 || self.fuel_effect < 0.0 || self.traffic_penalty < 0.0 {
            return fail("noise, fuel effect and traffic penalty must be non-negative");
        }
        let off = self.compound_offset;
        if !(off.soft <= off.medium && off.medium <= off.hard) {
            return fail("compound offsets must be ordered soft <= medium <= hard");
        }
        let deg = self.deg_rate;
        if deg.hard < 0.0 || !(deg.soft >= deg.medium && deg.medium >= deg.hard) {
            return fail(
                "degradation rates must be non-negative and ordered soft >= medium >= hard",
            );
        }
        let distinct = self
            .tyre_allocation
            .to_array()
            .iter()
            .filter(|&&n| n > 0)
            .count();
        if distinct < 2 {
            return fail("tyre allocation must offer at least two compounds");
        }
        if self.field.size < 1 || self.field.size > 20 {
            return fail("field size must be between 1 and 20");
        }
        Ok(())
    }

    /// Degradation time loss (s/lap) of a tyre of the given compound and age.
    pub fn degradation(&self, compound: Compound, age: u32) -> f64 {
        let rate = self.deg_rate.get(compound);
        let cliff = self.cliff_age.get(compound);
        if age <= cliff {
            rate * age as f64
        } else {
            rate * cliff as f64 + 2.0 * rate * (age - cliff) as f64
        }
    }

    pub fn pit_loss_under(&self, sc: super::SafetyCar) -> f64 {
        match sc {
            super::SafetyCar::Full => self.pit_loss * self.pit_loss_sc_factor,
            super::SafetyCar::Virtual => self.pit_loss * self.pit_loss_vsc_factor,
            super::SafetyCar::None => self.pit_loss,
        }
    }

    pub fn pace_factor(&self, sc: super::SafetyCar) -> f64 {
        match sc {
            super::SafetyCar::Full => self.sc_pace_factor,
            super::SafetyCar::Virtual => self.vsc_pace_factor,
            super::SafetyCar::None => 1.0,
        }
    }
}
