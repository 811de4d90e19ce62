use std::path::PathBuf;

use thiserror::Error;

use crate::sim::{Compound, TrackId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown track id `{0}`")]
    UnknownTrack(String),
    #[error("invalid track config for {track}: {reason}")]
    InvalidConfig { track: TrackId, reason: String },
    #[error("grid must hold between 1 and 20 cars, got {0}")]
    GridSize(usize),
    #[error("car {car} starts on {compound:?} but the allocation holds no such set")]
    NoStartingSet { car: usize, compound: Compound },
    #[error("unknown car id {0}")]
    UnknownCar(usize),
    #[error("no action supplied for externally controlled car {0}")]
    MissingAction(usize),
    #[error("race is already finished")]
    RaceFinished,

    #[error("calibration needs at least one simulation")]
    NoCalibrationRuns,
    #[error("scaling profile does not match: expected {expected}, found {found}")]
    ProfileMismatch { expected: String, found: String },

    #[error("input width mismatch: network expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("td update called with an empty batch")]
    EmptyBatch,
    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("unsupported checkpoint: {0}")]
    Checkpoint(String),

    #[error("strategy `{text}`: {reason}")]
    Strategy { text: String, reason: String },

    #[error("timestep {t} is outside the sequence of length {len}")]
    TimestepOutOfRange { t: usize, len: usize },
    #[error("iterations must be at least 1")]
    ZeroIterations,
    #[error("no leaf predicting {0} is reachable under the immutability constraints")]
    NoReachableLeaf(String),
    #[error("target action already predicted for this input")]
    TargetAlreadyPredicted,

    #[error("search range [{lo}, {hi}] does not bracket target mean finish {target}")]
    NotBracketing { lo: f64, hi: f64, target: f64 },

    #[error("malformed input: {0}")]
    Format(String),
    #[error("{0} is not available for this data source")]
    Unsupported(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
