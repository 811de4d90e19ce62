//! Session registry, request dispatch and the socket loop.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use pitwall::agent::QNetwork;
use pitwall::sim::TrackConfig;
use pitwall::state::ScalingProfile;
use pitwall::xai::DecisionTree;

use crate::protocol::{
    read_frame_bytes, write_frame, Envelope, Mode, Request, Response, PROTOCOL_VERSION,
};
use crate::session::{Session, SessionError};

pub type Reply = Envelope<Response>;

/// Shared model and the live sessions. Each session sits behind its own
/// lock, so commands for one session run one at a time while other
/// sessions proceed independently.
pub struct Service {
    net: Arc<QNetwork>,
    profile: Arc<ScalingProfile>,
    tree: Option<Arc<DecisionTree>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl Service {
    pub fn new(
        net: Arc<QNetwork>,
        profile: Arc<ScalingProfile>,
        tree: Option<Arc<DecisionTree>>,
    ) -> Self {
        Service {
            net,
            profile,
            tree,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions
            .lock()
            .expect("registry lock")
            .get(id)
            .cloned()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("registry lock").len()
    }

    fn error(id: Option<String>, lap: u32, reason: impl ToString) -> Vec<Reply> {
        vec![Envelope::new(
            id,
            lap,
            Response::Error {
                reason: reason.to_string(),
            },
        )]
    }

    /// Answers one request. Never panics on bad input; every failure comes
    /// back as an `Error` response.
    pub fn handle(&self, req: Envelope<Request>) -> Vec<Reply> {
        if req.v != PROTOCOL_VERSION {
            return Self::error(
                req.session_id,
                req.lap,
                format!("unsupported protocol version {}", req.v),
            );
        }
        if let Request::CreateSession { track, seed, mode } = &req.body {
            return self.create(track, *seed, *mode);
        }
        let Some(id) = req.session_id.clone() else {
            return Self::error(None, req.lap, "missing session_id");
        };
        let Some(handle) = self.session(&id) else {
            return Self::error(Some(id.clone()), req.lap, format!("unknown session {id}"));
        };
        let mut s = handle.lock().expect("session lock");
        if matches!(req.body, Request::GetState) {
            return state_replies(&s);
        }
        if let Err(e) = s.check_lap(req.lap) {
            return Self::error(Some(id), s.lap(), e);
        }
        match self.apply(&mut s, req.body) {
            Ok(replies) => {
                if replies
                    .iter()
                    .any(|r| matches!(r.body, Response::SessionEnded { .. }))
                {
                    drop(s);
                    self.sessions.lock().expect("registry lock").remove(&id);
                }
                replies
            }
            Err(e) => Self::error(Some(id), s.lap(), e),
        }
    }

    fn create(&self, track: &str, seed: u64, mode: Mode) -> Vec<Reply> {
        let config = match TrackConfig::resolve(track) {
            Ok(c) => c,
            Err(e) => return Self::error(None, 0, e),
        };
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        match Session::new(
            id.clone(),
            config,
            seed,
            mode,
            self.net.clone(),
            self.profile.clone(),
            self.tree.clone(),
        ) {
            Ok(s) => {
                let replies = state_replies(&s);
                self.sessions
                    .lock()
                    .expect("registry lock")
                    .insert(id, Arc::new(Mutex::new(s)));
                replies
            }
            Err(e) => Self::error(None, 0, e),
        }
    }

    fn apply(&self, s: &mut Session, body: Request) -> Result<Vec<Reply>, SessionError> {
        let id = Some(s.id.clone());
        match body {
            Request::CreateSession { .. } | Request::GetState => unreachable!("handled by caller"),
            Request::Advance => {
                s.advance()?;
                Ok(state_replies(s))
            }
            Request::InjectEvent { event, laps } => {
                s.inject(event, laps)?;
                Ok(state_replies(s))
            }
            Request::OverrideAction { action } => {
                s.override_action(action)?;
                Ok(vec![Envelope::new(
                    id,
                    s.lap(),
                    Response::SessionState(Box::new(s.snapshot())),
                )])
            }
            Request::Explain {
                method,
                target,
                norm,
            } => {
                let payload = s.explain(method, target, norm)?;
                Ok(vec![Envelope::new(
                    id,
                    s.lap(),
                    Response::Explanation(Box::new(payload)),
                )])
            }
            Request::WhatIf { action, n, seed } => {
                let r = s.whatif(action, n, seed)?;
                Ok(vec![Envelope::new(id, s.lap(), Response::WhatIf(r))])
            }
            Request::EndSession => {
                let (finish, failed) = s.result();
                Ok(vec![Envelope::new(
                    id,
                    s.lap(),
                    Response::SessionEnded {
                        finish,
                        failed,
                        completed: s.is_finished(),
                        classification: s.classification(),
                        log: s.log().clone(),
                    },
                )])
            }
        }
    }

    /// One auto-advance tick: a lap if the race is still running.
    pub fn tick(&self, id: &str) -> Vec<Reply> {
        let Some(handle) = self.session(id) else {
            return Vec::new();
        };
        let mut s = handle.lock().expect("session lock");
        if s.is_finished() {
            return Vec::new();
        }
        match s.advance() {
            Ok(_) => state_replies(&s),
            Err(e) => Self::error(Some(id.into()), s.lap(), e),
        }
    }
}

/// Current state, plus the recommendation while the race runs.
fn state_replies(s: &Session) -> Vec<Reply> {
    let id = Some(s.id.clone());
    let mut out = vec![Envelope::new(
        id.clone(),
        s.lap(),
        Response::SessionState(Box::new(s.snapshot())),
    )];
    if !s.is_finished() {
        let (action, q) = s.recommendation();
        out.push(Envelope::new(
            id,
            s.lap(),
            Response::Recommendation { action, q },
        ));
    }
    out
}

/// Serves one connection until the peer closes it. Frames are read on a
/// helper thread so auto-advance sessions can push laps between requests.
pub fn serve_connection(service: Arc<Service>, stream: TcpStream) -> io::Result<()> {
    let peer = stream.peer_addr().ok();
    let reader = stream.try_clone()?;
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut r = BufReader::new(reader);
        loop {
            let frame = read_frame_bytes(&mut r);
            let stop = !matches!(frame, Ok(Some(_)));
            if tx.send(frame).is_err() || stop {
                break;
            }
        }
    });
    let mut out = BufWriter::new(stream);
    let mut auto: Option<(String, Duration)> = None;
    loop {
        let frame = match &auto {
            Some((id, every)) => match rx.recv_timeout(*every) {
                Ok(f) => f,
                Err(RecvTimeoutError::Timeout) => {
                    for reply in service.tick(id) {
                        write_frame(&mut out, &reply)?;
                    }
                    continue;
                }
                Err(RecvTimeoutError::Disconnected) => break,
            },
            None => match rx.recv() {
                Ok(f) => f,
                Err(_) => break,
            },
        };
        let bytes = match frame {
            Ok(Some(b)) => b,
            Ok(None) => break,
            Err(e) => {
                log::warn!("{peer:?}: {e}");
                let _ = write_frame(
                    &mut out,
                    &Envelope::new(
                        None,
                        0,
                        Response::Error {
                            reason: e.to_string(),
                        },
                    ),
                );
                break;
            }
        };
        let replies = match serde_json::from_slice::<Envelope<Request>>(&bytes) {
            Ok(req) => service.handle(req),
            Err(e) => Service::error(None, 0, format!("malformed request: {e}")),
        };
        for reply in &replies {
            if let (Response::SessionState(snap), Some(id)) = (&reply.body, &reply.session_id) {
                if let Some(h) = service.session(id) {
                    auto = match h.lock().expect("session lock").mode {
                        Mode::AutoAdvance { lap_ms } if !snap.finished => {
                            Some((id.clone(), Duration::from_millis(lap_ms.max(1))))
                        }
                        _ => None,
                    };
                }
            }
            write_frame(&mut out, reply)?;
        }
    }
    Ok(())
}

/// Accepts connections forever, one thread each.
pub fn serve(service: Arc<Service>, listener: TcpListener) -> io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = stream?;
        let svc = service.clone();
        thread::spawn(move || {
            if let Err(e) = serve_connection(svc, stream) {
                log::warn!("connection closed: {e}");
            }
        });
    }
    Ok(())
}
