//! File-backed host behaviour: crash recovery through the journal, the
//! stdio protocol, full audits and evidence minimality.

use std::collections::BTreeSet;
use std::io::Cursor;
use std::path::Path;

use cacti_core::client::wire::{encode_frame, read_frame, Message};
use cacti_core::client::{assemble_evidence, ConfirmationPolicy, CrashPoint, Guard, Host, HostError, Store};
use cacti_core::hashchain::ListInfo;
use cacti_core::mht::MerkleTree;
use cacti_core::services::ProvisioningAuthority;
use cacti_core::tee::{Evidence, ManufacturerKey, Platform, RateProofRequest, TeeError, GLOBAL_LIST};
use cacti_core::Timestamp;
use proptest::prelude::*;
use rand::rngs::OsRng;

const NOW: Timestamp = Timestamp(1_700_000_000);

fn request(list: &str, t: i32, t_s: i32, k: u64) -> RateProofRequest {
    RateProofRequest {
        t: Timestamp(t),
        t_s: Timestamp(t_s),
        k,
        list_name: list.into(),
        server_pk: None,
        server_sig: None,
        prune_point: None,
        nonce: rand::random(),
    }
}

fn provision(host: &mut Host, pa: &mut ProvisioningAuthority) {
    let challenge = pa.challenge(NOW, &mut OsRng);
    let gpk = pa.gpk().clone();
    host.provision(&gpk, &challenge, |report, req| {
        pa.handle_join(report, req, NOW, &mut OsRng).map_err(|e| e.to_string())
    })
    .unwrap();
}

fn quiet(mut host: Host) -> Host {
    host.guard = Guard::new(ConfirmationPolicy::NeverAsk);
    host.guard.rate_limit = usize::MAX;
    host
}

fn open(home: &Path) -> Result<Host, HostError> {
    Host::open(home).map(quiet)
}

fn pa() -> ProvisioningAuthority {
    ProvisioningAuthority::new("pa", ManufacturerKey::development(), &mut OsRng).unwrap()
}

/// A provisioned file-backed host with two visits to `site`.
fn seeded(home: &Path) -> Host {
    let mut host = open(home).unwrap();
    provision(&mut host, &mut pa());
    for i in 0..2 {
        host.visit(&request("site", NOW.0 + i, 0, 10), NOW).unwrap();
    }
    host
}

#[test]
fn journal_replay_repairs_every_crash_point() {
    for point in [CrashPoint::AfterJournal, CrashPoint::AfterSealed, CrashPoint::AfterStore] {
        let dir = tempfile::tempdir().unwrap();
        let mut host = seeded(dir.path());
        host.inject_crash(point);
        let err = host.visit(&request("site", NOW.0 + 5, 0, 10), NOW).unwrap_err();
        assert!(matches!(err, HostError::Crashed), "{point:?}");
        drop(host);

        let mut host = open(dir.path()).unwrap();
        assert!(host.audit().unwrap().is_clean(), "{point:?}");
        // The crashed visit was committed by the enclave, so it counts.
        let err = host.visit(&request("site", NOW.0 + 6, 0, 2), NOW).unwrap_err();
        assert!(
            matches!(err, HostError::Tee(TeeError::RateExceeded { count: 3, limit: 2 })),
            "{point:?}: {err}"
        );
        host.visit(&request("site", NOW.0 + 7, 0, 3), NOW).unwrap();
    }
}

#[test]
fn lost_journal_is_detected() {
    // Crash after the journal, before the new sealed blob: the counter has
    // moved past the blob on disk.
    let dir = tempfile::tempdir().unwrap();
    let mut host = seeded(dir.path());
    host.inject_crash(CrashPoint::AfterJournal);
    host.visit(&request("site", NOW.0 + 5, 0, 10), NOW).unwrap_err();
    drop(host);
    std::fs::remove_file(dir.path().join("journal.bin")).unwrap();
    let err = open(dir.path()).err().expect("stale sealed blob must not load");
    assert_eq!(err.code(), "ROLLBACK_DETECTED", "{err}");

    // Crash after the sealed blob, before the store: the store no longer
    // matches the sealed root.
    let dir = tempfile::tempdir().unwrap();
    let mut host = seeded(dir.path());
    host.inject_crash(CrashPoint::AfterSealed);
    host.visit(&request("site", NOW.0 + 5, 0, 10), NOW).unwrap_err();
    drop(host);
    std::fs::remove_file(dir.path().join("journal.bin")).unwrap();
    let err = open(dir.path()).err().expect("store behind sealed root must not load");
    assert_eq!(err.code(), "ROOT_MISMATCH", "{err}");
}

#[test]
fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    drop(seeded(dir.path()));
    let mut host = open(dir.path()).unwrap();
    let audit = host.audit().unwrap();
    assert!(audit.is_clean());
    assert_eq!((audit.store.lists, audit.store.timestamps), (1, 2));
    host.visit(&request("site", NOW.0 + 3, 0, 2), NOW).unwrap();
}

#[test]
fn stdio_session() {
    let mut host = quiet(Host::in_memory(Platform::in_memory(&mut OsRng)).unwrap());
    provision(&mut host, &mut pa());
    let now = Timestamp::now();
    let mut input = Vec::new();
    for (i, name) in [GLOBAL_LIST, GLOBAL_LIST, "site"].iter().enumerate() {
        let msg = Message::VisitRequest {
            request: request(name, now.0 - 10 + i as i32, 0, 10),
            reply_url: "/proof".into(),
        };
        input.extend(encode_frame(&msg.encode()).unwrap());
    }
    input.extend(encode_frame(&Message::PruneGlobal { prune_point: Timestamp(now.0 - 9) }.encode()).unwrap());
    input.extend(encode_frame(&Message::PruneGlobal { prune_point: Timestamp(now.0 - 9) }.encode()).unwrap());
    input.extend(encode_frame(b"type=NOPE\n").unwrap());
    // A frame header promising more than the limit ends the session.
    input.extend(u32::MAX.to_be_bytes());
    input.extend(encode_frame(&Message::PruneGlobal { prune_point: now }.encode()).unwrap());

    let mut output = Vec::new();
    host.run_stdio(&mut Cursor::new(input), &mut output).unwrap();
    let mut out = Cursor::new(output);
    let mut replies = Vec::new();
    while let Some(frame) = read_frame(&mut out).unwrap() {
        replies.push(Message::decode(&frame).unwrap());
    }
    assert_eq!(replies.len(), 7, "{replies:?}");
    for r in &replies[..3] {
        assert!(matches!(r, Message::VisitResponse(Ok(_))), "{r:?}");
    }
    assert_eq!(replies[3], Message::PruneResponse(Ok(true)));
    assert_eq!(replies[4], Message::PruneResponse(Ok(false)));
    let codes: Vec<&str> = replies[5..]
        .iter()
        .map(|r| match r {
            Message::Error(e) => e.code.as_str(),
            other => panic!("{other:?}"),
        })
        .collect();
    assert_eq!(codes, ["UNKNOWN_MESSAGE_TYPE", "FRAME_TOO_LARGE"]);
    let global = host.store().list(GLOBAL_LIST).unwrap().unwrap();
    assert_eq!(global.info.prune_count, 1);
    assert!(host.audit().unwrap().is_clean());
}

#[test]
fn audit_after_many_updates() {
    let mut host = quiet(Host::in_memory(Platform::in_memory(&mut OsRng)).unwrap());
    provision(&mut host, &mut pa());
    let mut t = NOW.0;
    for round in 0..20 {
        for list in 0..40 {
            t += 1;
            let mut req = request(&format!("site{list:02}"), t, 0, u64::MAX);
            if round % 7 == 6 {
                req.prune_point = Some(Timestamp(t - 200));
            }
            host.visit(&req, Timestamp(t)).unwrap();
        }
        host.visit(&request(GLOBAL_LIST, t, 0, u64::MAX), Timestamp(t)).unwrap();
    }
    host.prune_global(Timestamp(t - 100)).unwrap();
    let audit = host.audit().unwrap();
    assert!(audit.is_clean(), "{audit:?}");
    assert_eq!(audit.store.lists, 41);
}

#[cfg(feature = "fixtures")]
#[test]
fn audit_of_large_seeded_store() {
    let mut host = quiet(Host::in_memory(Platform::in_memory(&mut OsRng)).unwrap());
    provision(&mut host, &mut pa());
    let mut lists: Vec<(ListInfo, Vec<Timestamp>)> = (0..4095)
        .map(|i| (ListInfo::new(format!("site{i:04}")), vec![Timestamp(1000 + i)]))
        .collect();
    lists.push((ListInfo::new("zz-long"), (0..1000).map(|i| Timestamp(2 * i)).collect()));
    host.seed_lists(&lists).unwrap();
    let audit = host.audit().unwrap();
    assert!(audit.is_clean());
    assert_eq!((audit.store.lists, audit.store.timestamps), (4096, 5095));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Exactly the timestamps the enclave needs leave the store: those from
    /// `t_s` on and the one before, or the whole chain when pruning.
    #[test]
    fn evidence_is_minimal(
        stamps in prop::collection::btree_set(0i32..5000, 1..200),
        t_s in 0i32..5100,
        prune in prop::option::of(0i32..5100),
    ) {
        let stamps: Vec<Timestamp> = stamps.into_iter().map(Timestamp).collect();
        let mut store = Store::in_memory().unwrap();
        store.insert_list(&ListInfo::new("site"), &stamps).unwrap();
        store.insert_list(&ListInfo::new("other"), &[Timestamp(1), Timestamp(2)]).unwrap();
        let tree = MerkleTree::build(store.leaves().unwrap()).unwrap();
        let mut req = request("site", 6000, t_s, 10);
        req.prune_point = prune.map(Timestamp);

        let Evidence::Existing(ev) = assemble_evidence(&store, &tree, &req, false).unwrap() else {
            panic!("site is stored");
        };
        let t_s = Timestamp(t_s);
        let sent: Vec<Timestamp> = ev
            .older
            .iter()
            .chain(ev.range.boundary.iter())
            .chain(&ev.range.in_range)
            .copied()
            .collect();
        let expected: Vec<Timestamp> = if prune.is_some() {
            stamps.clone()
        } else {
            let split = stamps.partition_point(|&t| t < t_s);
            stamps[split.saturating_sub(1)..].to_vec()
        };
        prop_assert_eq!(&sent, &expected);
        let unique: BTreeSet<_> = sent.iter().collect();
        prop_assert_eq!(unique.len(), sent.len());
        prop_assert_eq!(ev.range.prefix_head.is_some(), prune.is_none() && stamps.partition_point(|&t| t < t_s) >= 2);
    }
}
