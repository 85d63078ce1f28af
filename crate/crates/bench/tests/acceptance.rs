//! The acceptance criteria at full size, one PASS/FAIL line each.
//!
//! Run with `cargo test -p cacti-bench --test acceptance -- --nocapture`.

use std::collections::HashSet;
use std::time::Instant;

use cacti_bench::bandwidth::bench_bandwidth;
use cacti_bench::phases::{bench_lists, bench_timestamps, linear_r_squared, ListMode};
use cacti_bench::{attacks, oracle, scenario, Lab};
use cacti_core::digest::{hash_invocations, sha256};
use cacti_core::groupsig::{
    begin_join, revoke_by_signature, sign, verify, GroupManager, GroupSignature, MemberId,
    MemberPrivateKey, RevocationList,
};
use cacti_core::hashchain::{build_chain, final_hash, verify_range, ListInfo, RangeEvidence};
use cacti_core::mht::{verify_inclusion, MerkleLeaf, MerkleTree};
use cacti_core::Timestamp;
use rand::rngs::OsRng;

const TRIALS: usize = 1000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn bandwidth() -> Verdict {
    match bench_bandwidth() {
        Ok(r) => verdict(
            r.total() <= 2048,
            format!("{} sent + {} received = {} bytes (ceiling 2048)", r.sent, r.received, r.total()),
        ),
        Err(e) => verdict(false, format!("exchange failed: {e}")),
    }
}

fn shapes() -> Verdict {
    let ceil_log2 = |s: usize| s.next_power_of_two().trailing_zeros() as usize;
    let mut s = 2;
    let mut proofs = 0;
    while s <= 4096 {
        let leaves = (0..s)
            .map(|i| MerkleLeaf::new(format!("site{i:05}"), sha256(&[&(i as u64).to_be_bytes()])))
            .collect();
        let tree = MerkleTree::build(leaves).expect("sorted names");
        for i in 0..s {
            let proof = tree.prove_index(i);
            let ok = proof.siblings.len() == ceil_log2(s)
                && verify_inclusion(&tree.root(), &tree.leaves()[i].final_hash, &proof);
            if !ok {
                return verdict(false, format!("s={s} index {i}: {} siblings", proof.siblings.len()));
            }
            proofs += 1;
        }
        s *= 2;
    }

    let info = ListInfo::new("site.example");
    for n in [1usize, 2, 10, 100, 1000, 10_000] {
        // A boundary and a prefix before the window, then n in range.
        let list: Vec<Timestamp> = (0..n as i32 + 2).map(|i| Timestamp(1000 + 10 * i)).collect();
        let chain = build_chain(None, &list);
        let fin = final_hash(chain.last().map(|e| &e.hash), &info).expect("valid name");
        let ev = RangeEvidence {
            prefix_head: Some(chain[0].hash),
            boundary: Some(list[1]),
            in_range: list[2..].to_vec(),
        };
        let before = hash_invocations();
        let counted = verify_range(&ev, &fin, &info, list[2], u64::MAX).map(|c| c.count);
        let hashes = hash_invocations() - before;
        if counted != Ok(n as u64) || hashes != n as u64 + 2 {
            return verdict(false, format!("n={n}: {hashes} hashes, count {counted:?}"));
        }
    }
    verdict(
        true,
        format!("{proofs} proofs of length ceil(log2 s) for s=2..4096; n+2 hashes for n=1..10000"),
    )
}

fn attack_suite() -> Verdict {
    let reports = attacks::all(TRIALS, 0xcac7);
    let pass = reports.iter().all(|r| r.is_perfect() && r.trials == TRIALS);
    let detail = reports
        .iter()
        .map(|r| format!("{} {}/{}", r.name, r.detected, r.trials))
        .collect::<Vec<_>>()
        .join(", ");
    if !pass {
        for r in &reports {
            println!("    {r}");
        }
    }
    verdict(pass, detail)
}

fn oracle_equivalence() -> Verdict {
    let r = oracle::equivalence(TRIALS, 0x0ac1e);
    let pass = r.is_clean() && r.trials == TRIALS && r.elapsed.as_secs_f64() < 60.0;
    let mut detail = format!(
        "{} stores, {} pass / {} exceeded, {} disagreements with brute force, {:.1} s (limit 60 s)",
        r.trials,
        r.passes,
        r.trials - r.passes,
        r.mismatches + r.undercounts + r.inexact + r.bad_merges,
        r.elapsed.as_secs_f64()
    );
    if let Some(f) = r.first_failure {
        detail = format!("{detail}; first failure: {f}");
    }
    verdict(pass, detail)
}

fn enrol(manager: &mut GroupManager) -> (MemberId, MemberPrivateKey) {
    let (req, pending) = begin_join(manager.gpk(), &mut OsRng).expect("valid gpk");
    let resp = manager.join(&req, &mut OsRng).expect("fresh member");
    (resp.member_id, pending.finish(&resp).expect("valid credential"))
}

fn group_contract() -> Result<String, String> {
    let mut manager = GroupManager::setup(128, &mut OsRng).map_err(|e| e.to_string())?;
    let members: Vec<_> = (0..16).map(|_| enrol(&mut manager)).collect();
    let empty = RevocationList::new();

    // Correctness.
    for (_, key) in &members {
        let sig = sign(key, b"round trip", &empty, &mut OsRng).map_err(|e| e.to_string())?;
        let decoded = GroupSignature::from_bytes(&sig.to_bytes()).map_err(|e| e.to_string())?;
        if !verify(manager.gpk(), b"round trip", &decoded, &empty)
            || verify(manager.gpk(), b"other", &decoded, &empty)
        {
            return Err("round trip".into());
        }
    }

    // Randomisation: no 32-byte chunk of signature material, and no nonce,
    // repeats over 100 signatures of one message.
    let mut chunks = HashSet::new();
    let mut nonces = HashSet::new();
    for _ in 0..100 {
        let sig = sign(&members[0].1, b"same", &empty, &mut OsRng).map_err(|e| e.to_string())?;
        if !nonces.insert(sig.nonce) || !sig.sig_material.chunks_exact(32).all(|c| chunks.insert(c.to_vec())) {
            return Err("repeated signature bytes".into());
        }
    }

    // open() is a bijection onto the member ids.
    let mut opened = HashSet::new();
    for (id, key) in &members {
        let sig = sign(key, b"open", &empty, &mut OsRng).map_err(|e| e.to_string())?;
        if manager.open(b"open", &sig).ok() != Some(*id) {
            return Err("open returned the wrong member".into());
        }
        opened.insert(*id);
    }
    if opened.len() != 16 {
        return Err("open is not injective".into());
    }

    // Revocation blocks exactly the revoked member.
    let victim = 5;
    let evidence = sign(&members[victim].1, b"abuse", &empty, &mut OsRng).map_err(|e| e.to_string())?;
    let rl = revoke_by_signature(&empty, manager.gpk(), &evidence).map_err(|e| e.to_string())?;
    for (i, (_, key)) in members.iter().enumerate() {
        let sig = sign(key, b"after", &rl, &mut OsRng).map_err(|e| e.to_string())?;
        if verify(manager.gpk(), b"after", &sig, &rl) != (i != victim) {
            return Err(format!("revocation misjudged member {i}"));
        }
    }
    Ok("round trip x16, 100 signatures without repeats, open bijective over 16, revocation blocks 1 of 16".into())
}

fn group_signatures() -> Verdict {
    match group_contract() {
        Ok(detail) => verdict(true, detail),
        Err(e) => verdict(false, e),
    }
}

fn end_to_end() -> Verdict {
    match scenario::run() {
        Ok(r) => verdict(
            r.is_clean(),
            format!(
                "{}/{} sessions passed, pushed client -> {:?}, others pass: {}, {} artifacts, linkage {:?}",
                r.sessions.iter().flatten().filter(|&&p| p).count(),
                scenario::CLIENTS * scenario::SESSIONS,
                r.pushed_outcome,
                r.after_push.iter().skip(1).all(|&p| p),
                r.artifacts,
                r.linkage
            ),
        ),
        Err(e) => verdict(false, format!("scenario failed: {e}")),
    }
}

fn scaling() -> Verdict {
    let mut lab = Lab::new();
    let ns = [10usize, 100, 1000, 10_000];
    let reports: Vec<_> = ns.iter().map(|&n| bench_timestamps(&mut lab, n, 10)).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.pre_enclave + r.in_enclave).collect();
    let r2 = linear_r_squared(&xs, &ys);
    let big = reports[3].total();
    let lists = bench_lists(&mut lab, 4096, ListMode::Existing, 10).total();
    let fresh = bench_lists(&mut lab, 4096, ListMode::New, 10).total();
    verdict(
        big < 2000.0 && lists < 2000.0 && fresh < 2000.0 && r2 >= 0.9,
        format!(
            "10000 timestamps {big:.1} ms, 4096 lists {lists:.1} ms (new list {fresh:.1} ms), \
             R² {r2:.4} over pre+in {:?} ms",
            ys.iter().map(|y| (y * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    )
}

#[test]
fn acceptance() {
    let started = Instant::now();
    let mut results = vec![
        ("1 bandwidth", bandwidth()),
        ("2 proof shapes", shapes()),
        ("5 group-signature contract", group_signatures()),
        ("6 end-to-end scenario", end_to_end()),
        // Timed runs go one at a time so they do not compete for CPU.
        ("7 scaling", scaling()),
        ("4 oracle equivalence", oracle_equivalence()),
        ("3 attack suite", attack_suite()),
    ];
    results.sort_by(|a, b| a.0.cmp(b.0));

    println!();
    for (name, v) in &results {
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance suite finished in {:.1} s", started.elapsed().as_secs_f64());
    let failed: Vec<_> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
