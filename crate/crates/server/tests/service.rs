mod common;

use std::io::{BufReader, BufWriter};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use common::model;
use pitwall::action::Action;
use pitwall::sim::{Compound, SafetyCar};
use pitwall_server::protocol::{
    read_frame, write_frame, Envelope, ExplainMethod, ExplanationPayload, Mode, Request, Response,
    SafetyCarEvent, Snapshot,
};
use pitwall_server::service::{serve, Reply, Service};

fn service() -> Arc<Service> {
    let m = model();
    Arc::new(Service::new(
        m.net.clone(),
        m.profile.clone(),
        Some(m.tree.clone()),
    ))
}

fn req(id: &str, lap: u32, body: Request) -> Envelope<Request> {
    Envelope::new(Some(id.to_string()), lap, body)
}

fn create(svc: &Service, seed: u64) -> (String, Vec<Reply>) {
    let r = svc.handle(Envelope::new(
        None,
        0,
        Request::CreateSession {
            track: "desk".into(),
            seed,
            mode: Mode::StepOnCommand,
        },
    ));
    (r[0].session_id.clone().unwrap(), r)
}

fn snapshot(r: &Reply) -> &Snapshot {
    match &r.body {
        Response::SessionState(s) => s,
        other => panic!("expected state, got {other:?}"),
    }
}

fn error(r: &[Reply]) -> &str {
    match &r[0].body {
        Response::Error { reason } => reason,
        other => panic!("expected error, got {other:?}"),
    }
}

#[test]
fn create_returns_state_and_recommendation() {
    let svc = service();
    let (id, r) = create(&svc, 3);
    assert_eq!(r.len(), 2);
    assert_eq!(snapshot(&r[0]).lap, 0);
    assert!(matches!(r[1].body, Response::Recommendation { .. }));
    assert!(r
        .iter()
        .all(|e| e.session_id.as_deref() == Some(id.as_str()) && e.lap == 0 && e.v == 1));
}

#[test]
fn stale_and_unknown_commands_are_refused() {
    let svc = service();
    let (id, _) = create(&svc, 3);
    let r = svc.handle(req(&id, 0, Request::Advance));
    assert_eq!(snapshot(&r[0]).lap, 1);
    // a second Advance still stamped lap 0 is stale
    let r = svc.handle(req(&id, 0, Request::Advance));
    assert!(error(&r).contains("stale"));
    assert_eq!(r[0].lap, 1);
    let r = svc.handle(req("nope", 0, Request::GetState));
    assert!(error(&r).contains("unknown session"));
    let r = svc.handle(Envelope::new(None, 0, Request::Advance));
    assert!(error(&r).contains("session_id"));
    let mut bad = req(&id, 1, Request::GetState);
    bad.v = 9;
    assert!(error(&svc.handle(bad)).contains("version"));
    let r = svc.handle(Envelope::new(
        None,
        0,
        Request::CreateSession {
            track: "nowhere.toml".into(),
            seed: 0,
            mode: Mode::StepOnCommand,
        },
    ));
    assert!(matches!(r[0].body, Response::Error { .. }));
}

#[test]
fn invalid_override_is_rejected_without_advancing() {
    let svc = service();
    let (id, _) = create(&svc, 5);
    let mut lap = 0;
    // use up both soft sets
    loop {
        let st = svc.handle(req(&id, lap, Request::GetState));
        if !snapshot(&st[0]).controlled.soft_available {
            break;
        }
        svc.handle(req(
            &id,
            lap,
            Request::OverrideAction {
                action: Action::PitSoft,
            },
        ));
        svc.handle(req(&id, lap, Request::Advance));
        lap += 1;
    }
    let before = svc.handle(req(&id, lap, Request::GetState));
    let r = svc.handle(req(
        &id,
        lap,
        Request::OverrideAction {
            action: Action::PitSoft,
        },
    ));
    assert!(error(&r).contains("not available"));
    let after = svc.handle(req(&id, lap, Request::GetState));
    assert_eq!(before, after);
}

#[test]
fn ending_a_session_returns_its_log() {
    let svc = service();
    let (id, _) = create(&svc, 9);
    svc.handle(req(
        &id,
        0,
        Request::InjectEvent {
            event: SafetyCarEvent::Full,
            laps: Some(2),
        },
    ));
    svc.handle(req(&id, 0, Request::Advance));
    let r = svc.handle(req(&id, 1, Request::EndSession));
    let Response::SessionEnded {
        completed,
        log,
        classification,
        ..
    } = &r[0].body
    else {
        panic!("expected end");
    };
    assert!(!completed);
    assert_eq!(log.events.len(), 2);
    assert_eq!(classification.len(), 10);
    assert_eq!(svc.session_count(), 0);
    assert!(error(&svc.handle(req(&id, 1, Request::GetState))).contains("unknown"));
}

struct Client {
    rd: BufReader<TcpStream>,
    wr: BufWriter<TcpStream>,
}

impl Client {
    fn connect(addr: std::net::SocketAddr) -> Self {
        let s = TcpStream::connect(addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
        Client {
            rd: BufReader::new(s.try_clone().unwrap()),
            wr: BufWriter::new(s),
        }
    }

    fn send(&mut self, e: &Envelope<Request>) {
        write_frame(&mut self.wr, e).unwrap();
    }

    fn recv(&mut self) -> Reply {
        read_frame(&mut self.rd).unwrap().expect("server closed")
    }

    fn call(&mut self, e: Envelope<Request>, replies: usize) -> Vec<Reply> {
        self.send(&e);
        (0..replies).map(|_| self.recv()).collect()
    }
}

fn start_server() -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let svc = service();
    thread::spawn(move || serve(svc, listener));
    addr
}

#[test]
fn scripted_session_over_a_socket() {
    let mut c = Client::connect(start_server());
    let r = c.call(
        Envelope::new(
            None,
            0,
            Request::CreateSession {
                track: "desk".into(),
                seed: 12,
                mode: Mode::StepOnCommand,
            },
        ),
        2,
    );
    let id = r[0].session_id.clone().unwrap();
    for lap in 0..5 {
        let r = c.call(req(&id, lap, Request::Advance), 2);
        assert_eq!(snapshot(&r[0]).lap, lap + 1);
        let Response::Recommendation { q, .. } = r[1].body else {
            panic!("expected recommendation");
        };
        assert!(q.iter().all(|v| v.is_finite()));
    }
    let r = c.call(
        req(
            &id,
            5,
            Request::InjectEvent {
                event: SafetyCarEvent::Full,
                laps: Some(3),
            },
        ),
        2,
    );
    let snap = snapshot(&r[0]);
    assert_eq!(snap.sc_status, SafetyCar::Full);
    assert!(snap.cars[1..].iter().all(|car| car.gap_ahead <= 1.0 + 1e-9));
    let r = c.call(
        req(
            &id,
            5,
            Request::OverrideAction {
                action: Action::PitHard,
            },
        ),
        1,
    );
    assert_eq!(snapshot(&r[0]).pending_override, Some(Action::PitHard));
    let r = c.call(req(&id, 5, Request::Advance), 2);
    let me = snapshot(&r[0])
        .cars
        .iter()
        .find(|car| car.controlled)
        .unwrap()
        .clone();
    assert_eq!((me.compound, me.tyre_age), (Compound::Hard, 0));
    let r = c.call(
        req(
            &id,
            6,
            Request::Explain {
                method: ExplainMethod::Attribution,
                target: None,
                norm: None,
            },
        ),
        1,
    );
    let Response::Explanation(p) = &r[0].body else {
        panic!("expected explanation");
    };
    assert!(matches!(**p, ExplanationPayload::Attribution { .. }));
    let r = c.call(
        req(
            &id,
            6,
            Request::Explain {
                method: ExplainMethod::Path,
                target: None,
                norm: None,
            },
        ),
        1,
    );
    assert!(
        matches!(&r[0].body, Response::Explanation(p) if matches!(**p, ExplanationPayload::Path(_)))
    );
    let r = c.call(
        req(
            &id,
            6,
            Request::WhatIf {
                action: Action::NoPit,
                n: 10,
                seed: None,
            },
        ),
        1,
    );
    let Response::WhatIf(w) = &r[0].body else {
        panic!("expected what-if");
    };
    assert_eq!(w.distribution.iter().sum::<usize>(), 10);
    let r = c.call(req(&id, 6, Request::GetState), 2);
    assert_eq!(snapshot(&r[0]).lap, 6);

    // a second connection can pick the session up
    let mut c2 = Client::connect(c.wr.get_ref().peer_addr().unwrap());
    let r = c2.call(req(&id, 6, Request::GetState), 2);
    assert_eq!(snapshot(&r[0]).lap, 6);
}

#[test]
fn auto_advance_pushes_laps() {
    let mut c = Client::connect(start_server());
    let r = c.call(
        Envelope::new(
            None,
            0,
            Request::CreateSession {
                track: "desk".into(),
                seed: 1,
                mode: Mode::AutoAdvance { lap_ms: 5 },
            },
        ),
        2,
    );
    assert_eq!(snapshot(&r[0]).lap, 0);
    let mut last = 0;
    loop {
        let e = c.recv();
        if let Response::SessionState(s) = &e.body {
            assert_eq!(s.lap, last + 1, "laps never skip or repeat");
            last = s.lap;
            if s.finished {
                break;
            }
        }
    }
    assert_eq!(last, 20);
}

#[test]
fn malformed_frames_get_an_error() {
    use std::io::Write;
    let addr = start_server();
    let mut c = Client::connect(addr);
    let body = b"{not json";
    c.wr.write_all(&(body.len() as u32).to_be_bytes()).unwrap();
    c.wr.write_all(body).unwrap();
    c.wr.flush().unwrap();
    let e = c.recv();
    assert!(matches!(e.body, Response::Error { ref reason } if reason.contains("malformed")));
}
