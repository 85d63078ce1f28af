use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicI32, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use cacti_core::client::wire::Message;
use cacti_core::client::{ConfirmationPolicy, Guard, Host};
use cacti_core::services::{ProvisioningAuthority, ThresholdPolicy, TrustedPa, Verifier};
use cacti_core::tee::{ManufacturerKey, Platform, ServerKey};
use cacti_core::Timestamp;
use cacti_http::flows::{self, VisitOutcome};
use cacti_http::{pa_router, verifier_router, Clock, HttpClient, PaState, Running, VerifierState};
use rand::rngs::OsRng;

struct World {
    clock: Arc<AtomicI32>,
    pa: Running,
    verifier: Running,
    pa_state: PaState,
}

fn clock_of(t: &Arc<AtomicI32>) -> Clock {
    let t = t.clone();
    Arc::new(move || Timestamp(t.load(Ordering::SeqCst)))
}

fn world(manufacturer: &ManufacturerKey, k: u64) -> World {
    let clock = Arc::new(AtomicI32::new(1_700_000_000));
    let pa = ProvisioningAuthority::new("pa", manufacturer.clone(), &mut OsRng).unwrap();
    let trusted = TrustedPa {
        name: "pa".into(),
        gpk: pa.gpk().clone(),
        revoked: Default::default(),
    };
    let pa_state = PaState::new(pa, clock_of(&clock));
    let verifier = Verifier::new(
        ThresholdPolicy::new("example.com", 86_400, k),
        Some(ServerKey::generate(&mut OsRng)),
        vec![trusted],
    );
    World {
        pa: Running::spawn(pa_router(pa_state.clone())).unwrap(),
        verifier: Running::spawn(verifier_router(VerifierState::new(verifier, clock_of(&clock)))).unwrap(),
        clock,
        pa_state,
    }
}

fn client_host(manufacturer: &ManufacturerKey) -> Host {
    let platform = Platform::in_memory(&mut OsRng).with_manufacturer(manufacturer.clone());
    let mut host = Host::in_memory(platform).unwrap();
    host.guard = Guard::new(ConfirmationPolicy::NeverAsk);
    host
}

#[test]
fn challenge_proof_round_trip_over_http() {
    let key = ManufacturerKey::generate(&mut OsRng);
    let w = world(&key, 2);
    let pa = HttpClient::new(w.pa.addr);
    let verifier = HttpClient::new(w.verifier.addr);

    let g1 = pa.get("/gpk").unwrap();
    let g2 = pa.get("/gpk").unwrap();
    assert_eq!(g1.body, g2.body);
    assert_eq!(flows::fetch_revocation_list(&pa).unwrap().len(), 0);

    let mut host = client_host(&key);
    flows::provision(&mut host, &pa).unwrap();
    assert_eq!(w.pa_state.pa.lock().unwrap().issuance_log().len(), 1);

    // k = 2 admits a third visit: two earlier timestamps are within limit.
    for i in 0..4 {
        let now = Timestamp(w.clock.fetch_add(10, Ordering::SeqCst));
        let v = flows::visit(&mut host, &verifier, now).unwrap();
        if i < 3 {
            assert_eq!(v.outcome, VisitOutcome::CaptchaPass);
            assert_eq!(v.submission.as_ref().unwrap().status, 200);
        } else {
            assert_eq!(v.outcome, VisitOutcome::NoProof("RATE_EXCEEDED".into()));
        }
    }
}

#[test]
fn failures_map_to_status_codes() {
    let key = ManufacturerKey::generate(&mut OsRng);
    let w = world(&key, 5);
    let pa = HttpClient::new(w.pa.addr);
    let verifier = HttpClient::new(w.verifier.addr);

    assert_eq!(verifier.post("/proof", b"not a message").unwrap().status, 400);
    assert_eq!(pa.post("/join", b"type=JOIN\n").unwrap().status, 400);

    // A platform from another manufacturer is refused.
    let mut stranger = client_host(&ManufacturerKey::generate(&mut OsRng));
    assert!(flows::provision(&mut stranger, &pa).is_err());

    let mut host = client_host(&key);
    flows::provision(&mut host, &pa).unwrap();
    let ch = verifier.get("/challenge").unwrap();
    let Message::VisitRequest { request, .. } = Message::decode(&ch.body).unwrap() else {
        panic!("expected a visit request");
    };
    let now = Timestamp(w.clock.load(Ordering::SeqCst));
    let proof = host.visit(&request, now).unwrap();
    let body = Message::VisitResponse(Ok(proof)).encode();
    assert_eq!(verifier.post("/proof", &body).unwrap().status, 200);
    let replay = verifier.post("/proof", &body).unwrap();
    assert_eq!(replay.status, 403);
    assert!(String::from_utf8_lossy(&replay.body).contains("reason=REPLAY"));

    // Stale nonce.
    let now = Timestamp(w.clock.fetch_add(1, Ordering::SeqCst) + 1);
    let ch = verifier.get("/challenge").unwrap();
    let Message::VisitRequest { request, .. } = Message::decode(&ch.body).unwrap() else {
        panic!("expected a visit request");
    };
    let proof = host.visit(&request, now).unwrap();
    w.clock.fetch_add(301, Ordering::SeqCst);
    let late = verifier
        .post("/proof", &Message::VisitResponse(Ok(proof)).encode())
        .unwrap();
    assert_eq!(late.status, 403);
    assert!(String::from_utf8_lossy(&late.body).contains("reason=EXPIRED"));
}

/// Forwards one connection at a time to `target`, counting the bytes
/// in each direction.
fn byte_tap(target: SocketAddr) -> (SocketAddr, Arc<AtomicUsize>, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let up = Arc::new(AtomicUsize::new(0));
    let down = Arc::new(AtomicUsize::new(0));
    let (u, d) = (up.clone(), down.clone());
    thread::spawn(move || {
        for conn in listener.incoming() {
            let Ok(client) = conn else { return };
            let server = TcpStream::connect(target).unwrap();
            let pump = |mut from: TcpStream, mut to: TcpStream, n: Arc<AtomicUsize>| {
                thread::spawn(move || {
                    let mut buf = [0u8; 4096];
                    loop {
                        match from.read(&mut buf) {
                            Ok(0) | Err(_) => break,
                            Ok(k) => {
                                n.fetch_add(k, Ordering::SeqCst);
                                if to.write_all(&buf[..k]).is_err() {
                                    break;
                                }
                            }
                        }
                    }
                    let _ = to.shutdown(Shutdown::Write);
                })
            };
            let a = pump(client.try_clone().unwrap(), server.try_clone().unwrap(), u.clone());
            let b = pump(server, client, d.clone());
            a.join().unwrap();
            b.join().unwrap();
        }
    });
    (addr, up, down)
}

#[test]
fn client_byte_counts_match_a_socket_tap() {
    let key = ManufacturerKey::generate(&mut OsRng);
    let w = world(&key, 5);
    let mut host = client_host(&key);
    flows::provision(&mut host, &HttpClient::new(w.pa.addr)).unwrap();

    let (tap, up, down) = byte_tap(w.verifier.addr);
    let now = Timestamp(w.clock.load(Ordering::SeqCst));
    let v = flows::visit(&mut host, &HttpClient::new(tap), now).unwrap();
    assert_eq!(v.outcome, VisitOutcome::CaptchaPass);
    assert_eq!(v.bytes_sent(), up.load(Ordering::SeqCst));
    assert_eq!(v.bytes_received(), down.load(Ordering::SeqCst));
    assert!(v.bytes_sent() + v.bytes_received() <= 2048, "{v:?}");
}
