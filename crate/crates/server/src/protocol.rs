//! Wire protocol.
//!
//! Every message is one frame: a 4-byte big-endian length followed by that
//! many bytes of UTF-8 JSON. The JSON is an [`Envelope`]:
//!
//! ```text
//! {"v": 1, "session_id": "s1", "lap": 4, "body": {"type": "Advance"}}
//! ```
//!
//! `lap` is the number of completed laps the sender believes the session is
//! at. Commands carrying any other lap are refused as stale. `CreateSession`
//! has no session id and lap 0. A request is answered by one or more frames;
//! in auto-advance mode the server also pushes `SessionState` and
//! `Recommendation` after every lap.

use std::io::{self, Read, Write};

use pitwall::action::Action;
use pitwall::sim::{Compound, SafetyCar};
use pitwall::state::UnifiedRaceState;
use pitwall::xai::{Attribution, Counterfactual, DecisionPath, Norm, Note};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::session::EventLog;

pub const PROTOCOL_VERSION: u32 = 1;
/// Frames above this size are rejected before allocation.
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub v: u32,
    pub session_id: Option<String>,
    pub lap: u32,
    pub body: T,
}

impl<T> Envelope<T> {
    pub fn new(session_id: Option<String>, lap: u32, body: T) -> Self {
        Envelope {
            v: PROTOCOL_VERSION,
            session_id,
            lap,
            body,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    #[default]
    StepOnCommand,
    /// Advance one lap every `lap_ms` milliseconds without being asked.
    AutoAdvance { lap_ms: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyCarEvent {
    Full,
    Virtual,
    Clear,
}

impl SafetyCarEvent {
    pub fn status(self) -> SafetyCar {
        match self {
            SafetyCarEvent::Full => SafetyCar::Full,
            SafetyCarEvent::Virtual => SafetyCar::Virtual,
            SafetyCarEvent::Clear => SafetyCar::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainMethod {
    Attribution,
    Path,
    Counterfactual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Request {
    CreateSession {
        /// Track code, `desk`, or a path to a track TOML file.
        track: String,
        seed: u64,
        #[serde(default)]
        mode: Mode,
    },
    GetState,
    Advance,
    InjectEvent {
        event: SafetyCarEvent,
        /// Laps the safety car stays out; defaults to 3.
        #[serde(default)]
        laps: Option<u32>,
    },
    OverrideAction {
        action: Action,
    },
    Explain {
        method: ExplainMethod,
        /// Counterfactual target; defaults to the first action the tree
        /// does not already predict.
        #[serde(default)]
        target: Option<Action>,
        #[serde(default)]
        norm: Option<Norm>,
    },
    WhatIf {
        action: Action,
        n: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    EndSession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarView {
    pub car: usize,
    pub position: usize,
    pub compound: Compound,
    pub tyre_age: u32,
    pub pit_count: u32,
    pub gap_ahead: f64,
    pub gap_to_leader: f64,
    pub last_lap_time: Option<f64>,
    pub controlled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub lap: u32,
    pub total_laps: u32,
    pub sc_status: SafetyCar,
    pub sc_laps_remaining: u32,
    /// Classification order, P1 first.
    pub cars: Vec<CarView>,
    pub controlled: UnifiedRaceState,
    pub pending_override: Option<Action>,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ExplanationPayload {
    Attribution {
        attribution: Attribution,
    },
    Path(DecisionPath),
    Counterfactual {
        counterfactual: Counterfactual,
        notes: Vec<Note>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    pub action: Action,
    pub n: usize,
    /// Count per finishing position, P1 first.
    pub distribution: Vec<usize>,
    pub mean_finish: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
#[allow(clippy::large_enum_variant)]
pub enum Response {
    SessionState(Box<Snapshot>),
    Recommendation {
        action: Action,
        q: [f64; 4],
    },
    Explanation(Box<ExplanationPayload>),
    WhatIf(WhatIfResult),
    SessionEnded {
        finish: usize,
        failed: bool,
        /// False when the session was ended before the flag.
        completed: bool,
        classification: Vec<usize>,
        log: EventLog,
    },
    Error {
        reason: String,
    },
}

pub fn write_frame<W: Write, T: Serialize>(out: &mut W, msg: &T) -> io::Result<()> {
    let body = serde_json::to_vec(msg).map_err(io::Error::other)?;
    let len = u32::try_from(body.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    out.write_all(&len.to_be_bytes())?;
    out.write_all(&body)?;
    out.flush()
}

/// Next frame's bytes, or `None` at a clean end of stream.
pub fn read_frame_bytes<R: Read>(input: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes"),
        ));
    }
    let mut buf = vec![0; len];
    input.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn read_frame<R: Read, T: DeserializeOwned>(input: &mut R) -> io::Result<Option<T>> {
    match read_frame_bytes(input)? {
        Some(b) => serde_json::from_slice(&b)
            .map(Some)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
        None => Ok(None),
    }
}
