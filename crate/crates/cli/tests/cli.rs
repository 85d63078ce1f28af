use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use cacti_core::client::wire::{encode_frame, read_frame, Message};
use cacti_core::Timestamp;
use cacti_http::HttpClient;

fn cacti(home: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cacti"))
        .arg("--home")
        .arg(home)
        .args(args)
        .output()
        .unwrap()
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// Starts a server subcommand on an ephemeral port and returns its address
/// once it prints it.
fn serve(args: &[&str]) -> (Server, SocketAddr) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cacti"))
        .args(args)
        .args(["--addr", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let stdout = child.stdout.take().unwrap();
    let server = Server(child);
    for line in BufReader::new(stdout).lines() {
        let line = line.unwrap();
        if let Some(addr) = line.rsplit("http://").next().filter(|_| line.contains("http://")) {
            return (server, addr.parse().unwrap());
        }
    }
    panic!("server exited before printing its address");
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn provision_visit_audit_against_live_servers() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path().join("client");
    let (_pa, pa) = serve(&["serve-pa"]);
    let pa_arg = pa.to_string();
    let (_verifier, verifier) = serve(&["serve-verifier", "--pa", &pa_arg, "--k", "1"]);

    let out = cacti(&home, &["provision", "--pa", &pa_arg]);
    assert!(out.status.success(), "{out:?}");
    assert!(text(&out).starts_with("provisioned"));

    let verifier_arg = verifier.to_string();
    let challenge = dir.path().join("challenge.txt");
    let mut outcomes = Vec::new();
    for i in 0..3 {
        // Request timestamps have one-second resolution and must increase.
        if i > 0 {
            std::thread::sleep(std::time::Duration::from_millis(1100));
        }
        let ch = HttpClient::new(verifier).get("/challenge").unwrap();
        std::fs::write(&challenge, &ch.body).unwrap();
        let out = cacti(
            &home,
            &["visit", challenge.to_str().unwrap(), "--policy", "never", "--submit", &verifier_arg],
        );
        outcomes.push((out.status.code(), text(&out)));
    }
    // k = 1: two visits pass, the third produces no proof and is refused.
    assert_eq!(outcomes[0].0, Some(0), "{outcomes:?}");
    assert_eq!(outcomes[1].0, Some(0), "{outcomes:?}");
    assert_eq!(outcomes[2].0, Some(1), "{outcomes:?}");
    assert!(outcomes[2].1.contains("error=RATE_EXCEEDED"), "{outcomes:?}");

    let out = cacti(&home, &["audit"]);
    assert!(out.status.success(), "{out:?}");
    assert!(text(&out).contains("lists=1 timestamps=2 bad_rows=0 root_matches=true"));

    // No global list yet.
    let out = cacti(&home, &["prune-global", "100"]);
    assert_eq!(text(&out).trim(), "unchanged");

    // Declined without --yes under the default always-ask policy.
    let ch = HttpClient::new(verifier).get("/challenge").unwrap();
    std::fs::write(&challenge, &ch.body).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_cacti"))
        .arg("--home")
        .arg(&home)
        .arg("stdio")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&encode_frame(&ch.body).unwrap()).unwrap();
    let reply = read_frame(&mut child.stdout.take().unwrap()).unwrap().unwrap();
    assert!(child.wait().unwrap().success());
    match Message::decode(&reply).unwrap() {
        Message::VisitResponse(Err(e)) => assert_eq!(e.code, "USER_DECLINED"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn tampered_store_fails_audit() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path();
    let (_pa, pa) = serve(&["serve-pa"]);
    assert!(cacti(home, &["provision", "--pa", &pa.to_string()]).status.success());
    let mut frames = Vec::new();
    let mut request = cacti_core::tee::RateProofRequest {
        t: Timestamp::now(),
        t_s: Timestamp(0),
        k: 10,
        list_name: "site.example".into(),
        server_pk: None,
        server_sig: None,
        prune_point: None,
        nonce: [1; 16],
    };
    for i in 0..2 {
        request.nonce[0] = i;
        let body = Message::VisitRequest {
            request: request.clone(),
            reply_url: "/proof".into(),
        }
        .encode();
        frames.extend(encode_frame(&body).unwrap());
        request.t = Timestamp(request.t.0 + 1);
    }
    let mut child = Command::new(env!("CARGO_BIN_EXE_cacti"))
        .arg("--home")
        .arg(home)
        .args(["stdio", "--yes"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&frames).unwrap();
    let mut stdout = child.stdout.take().unwrap();
    for _ in 0..2 {
        let reply = read_frame(&mut stdout).unwrap().unwrap();
        assert!(matches!(Message::decode(&reply).unwrap(), Message::VisitResponse(Ok(_))));
    }
    assert!(child.wait().unwrap().success());
    assert!(cacti(home, &["audit"]).status.success());

    // Rewrite one stored intermediate hash.
    let db = rusqlite::Connection::open(home.join("store.db")).unwrap();
    let changed = db
        .execute("UPDATE timestamps SET intermediate_hash = zeroblob(32) WHERE ts = (SELECT MIN(ts) FROM timestamps)", [])
        .unwrap();
    assert_eq!(changed, 1);
    drop(db);
    let out = cacti(home, &["audit"]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    assert!(text(&out).contains("bad_rows=1"));
}

#[test]
fn bench_writes_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let out = cacti(
        dir.path(),
        &["bench", "--timestamps", "1,50", "--lists", "8", "--mode", "existing", "--bandwidth", "--csv", csv.to_str().unwrap()],
    );
    assert!(out.status.success(), "{out:?}");
    let phases = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = phases.lines().collect();
    assert!(lines[0].starts_with("bench,param,mode,init_enclave_ms"));
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("lists,8,existing,"));
    let bandwidth = std::fs::read_to_string(dir.path().join("run-bandwidth.csv")).unwrap();
    let total: usize = bandwidth.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(total <= 2048);

    let out = cacti(dir.path(), &["bench"]);
    assert_eq!(out.status.code(), Some(2));
}
