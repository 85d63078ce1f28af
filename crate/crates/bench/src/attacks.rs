//! Randomized attacks by a malicious host (and a replaying network peer).
//!
//! Each trial tampers with what the untrusted side controls (the SQLite
//! store, the sealed blob, the time and content of requests, captured
//! proofs) and records whether the enclave or verifier caught it. Each trial
//! also runs an honest control so a harness that rejects everything cannot
//! score full marks.

use std::collections::BTreeMap;
use std::fmt;

use rand::rngs::{OsRng, StdRng};
use rand::seq::SliceRandom;
use rand::Rng;

use cacti_core::client::{ConfirmationPolicy, Decision, Guard, Host, HostError, Rejection};
use cacti_core::hashchain::ListInfo;
use cacti_core::services::{
    PaError, Reason, ThresholdPolicy, TrustedPa, Verifier, VerifyDecision,
};
use cacti_core::tee::{Enclave, ServerKey, TeeError};
use cacti_core::Timestamp;

use crate::lab::{request, Lab, EPOCH};

/// Fresh client every this many list-seeding trials, so the tree stays small.
const TRIALS_PER_CLIENT: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackReport {
    pub name: &'static str,
    pub trials: usize,
    pub detected: usize,
    pub controls_passed: usize,
    /// How undetected or mis-detected trials ended, by outcome.
    pub misses: BTreeMap<String, usize>,
}

impl AttackReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            trials: 0,
            detected: 0,
            controls_passed: 0,
            misses: BTreeMap::new(),
        }
    }

    fn record(&mut self, detected: Result<(), String>, control: bool) {
        self.trials += 1;
        match detected {
            Ok(()) => self.detected += 1,
            Err(how) => *self.misses.entry(how).or_default() += 1,
        }
        self.controls_passed += usize::from(control);
    }

    /// Every attack caught and every honest control accepted.
    pub fn is_perfect(&self) -> bool {
        self.trials > 0 && self.detected == self.trials && self.controls_passed == self.trials
    }
}

impl fmt::Display for AttackReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: detected {}/{}, controls {}/{}",
            self.name, self.detected, self.trials, self.controls_passed, self.trials
        )?;
        if !self.misses.is_empty() {
            write!(f, ", misses {:?}", self.misses)?;
        }
        Ok(())
    }
}

fn expect(result: Result<impl Sized, HostError>, want: &str) -> Result<(), String> {
    expect_any(result, &[want])
}

/// Omitted or substituted history surfaces as a chain mismatch, or, when the
/// host's claimed final hash matches its doctored chain, as a leaf missing
/// from the tree. Both are the enclave refusing the evidence.
const INTEGRITY: &[&str] = &["HASH_MISMATCH", "NOT_IN_MHT"];

fn expect_any(result: Result<impl Sized, HostError>, want: &[&str]) -> Result<(), String> {
    match result {
        Err(e) if want.contains(&e.code()) => Ok(()),
        Err(e) => Err(e.code().to_owned()),
        Ok(_) => Err("ACCEPTED".to_owned()),
    }
}

fn list_id(host: &Host, name: &str) -> i64 {
    host.store()
        .list(name)
        .expect("store readable")
        .expect("list was seeded")
        .id
}

fn sql(host: &Host, statement: &str, params: impl rusqlite::Params) {
    host.store()
        .connection()
        .execute(statement, params)
        .expect("tampering statement runs");
}

/// `n` strictly increasing timestamps ending before [`EPOCH`].
fn history(rng: &mut StdRng, n: usize) -> Vec<Timestamp> {
    let mut t = EPOCH.0 - 100_000;
    (0..n)
        .map(|_| {
            t += rng.gen_range(1..2_000);
            Timestamp(t)
        })
        .collect()
}

/// Restores an old sealed blob together with the leaves that matched it.
pub fn rollback(lab: &mut Lab, trials: usize, rng: &mut StdRng) -> AttackReport {
    let mut report = AttackReport::new("rollback");
    let mut host = lab.client();
    let lists = ["a.example", "b.example", "c.example"];
    let mut t = EPOCH;
    for l in lists {
        t = t.saturating_add(100);
        host.visit(&request(l, t, t, u64::MAX), t).expect("honest visit");
    }
    for _ in 0..trials {
        let old_leaves = host.leaves().to_vec();
        let old_sealed = host.sealed().expect("provisioned").clone();
        for _ in 0..rng.gen_range(1..=2) {
            t = t.saturating_add(rng.gen_range(1..1_000));
            let l = lists.choose(rng).expect("nonempty");
            host.visit(&request(l, t, t.saturating_add(-3_600), u64::MAX), t)
                .expect("honest visit");
        }
        let detected = match Enclave::init_mt(host.platform().clone(), old_leaves, &old_sealed) {
            Err(TeeError::RollbackDetected) => Ok(()),
            Err(e) => Err(e.code().to_owned()),
            Ok(_) => Err("ACCEPTED".into()),
        };
        let control = host.reinit_enclave().is_ok();
        report.record(detected, control);
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Start,
    Middle,
    End,
}

/// Deletes one in-window timestamp row so the request would pass with the
/// limit set one below the true count.
pub fn omission(lab: &mut Lab, position: Position, trials: usize, rng: &mut StdRng) -> AttackReport {
    let mut report = AttackReport::new(match position {
        Position::Start => "omission-start",
        Position::Middle => "omission-middle",
        Position::End => "omission-end",
    });
    let mut host = lab.client();
    for trial in 0..trials {
        if trial > 0 && trial % TRIALS_PER_CLIENT == 0 {
            host = lab.client();
        }
        let n = rng.gen_range(3..=40);
        let stamps = history(rng, n);
        let name = format!("omit-{trial}.example");
        host.seed_lists(&[(ListInfo::new(&name), stamps.clone())])
            .expect("seeding");
        // Window start at some entry, leaving at least three in the window.
        let s = rng.gen_range(0..=n - 3);
        let in_window = n - s;
        let victim = match position {
            Position::Start => s,
            Position::Middle => s + in_window / 2,
            Position::End => n - 1,
        };
        let req = request(&name, EPOCH, stamps[s], in_window as u64 - 1);

        // Honest control first: the true count exceeds k.
        let control = matches!(
            host.visit(&req, EPOCH),
            Err(HostError::Tee(TeeError::RateExceeded { .. }))
        );
        sql(
            &host,
            "DELETE FROM timestamps WHERE list_id = ?1 AND ts = ?2",
            (list_id(&host, &name), stamps[victim].0),
        );
        let retry = request(&name, EPOCH, stamps[s], in_window as u64 - 1);
        report.record(expect_any(host.visit(&retry, EPOCH), INTEGRITY), control);
    }
    report
}

/// Presents another list's (shorter) history in place of the requested one:
/// by swapping names in the store, by replacing the rows with a shorter
/// self-consistent chain, or by deleting the list and claiming it is new.
pub fn substitution(lab: &mut Lab, trials: usize, rng: &mut StdRng) -> AttackReport {
    let mut report = AttackReport::new("substitution");
    let mut host = lab.client();
    for trial in 0..trials {
        if trial > 0 && trial % TRIALS_PER_CLIENT == 0 {
            host = lab.client();
        }
        let short_n = rng.gen_range(1..=10);
        let long_n = short_n + rng.gen_range(1..=20);
        let short = format!("short-{trial}.example");
        let long = format!("long-{trial}.example");
        let long_stamps = history(rng, long_n);
        host.seed_lists(&[
            (ListInfo::new(&short), history(rng, short_n)),
            (ListInfo::new(&long), long_stamps.clone()),
        ])
        .expect("seeding");
        let t_s = Timestamp(long_stamps[0].0 - 1);
        let k = short_n as u64;
        let control = matches!(
            host.visit(&request(&long, EPOCH, t_s, k), EPOCH),
            Err(HostError::Tee(TeeError::RateExceeded { .. }))
        );
        let id = list_id(&host, &long);
        let detected = match trial % 3 {
            0 => {
                let short_id = list_id(&host, &short);
                sql(&host, "UPDATE lists SET name = '~swap' WHERE list_id = ?1", [id]);
                sql(&host, "UPDATE lists SET name = ?1 WHERE list_id = ?2", (&long, short_id));
                sql(&host, "UPDATE lists SET name = ?1 WHERE list_id = ?2", (&short, id));
                expect_any(host.visit(&request(&long, EPOCH, t_s, k), EPOCH), INTEGRITY)
            }
            1 => {
                let forged = history(rng, short_n);
                let chain = cacti_core::hashchain::build_chain(None, &forged);
                sql(&host, "DELETE FROM timestamps WHERE list_id = ?1", [id]);
                for e in &chain {
                    sql(
                        &host,
                        "INSERT INTO timestamps (list_id, ts, intermediate_hash) VALUES (?1, ?2, ?3)",
                        (id, e.ts.0, e.hash.to_vec()),
                    );
                }
                // The forged chain is internally consistent; only the
                // enclave can tell.
                let consistent = host.store().audit().map(|a| a.is_clean()).unwrap_or(false);
                match expect_any(host.visit(&request(&long, EPOCH, t_s, k), EPOCH), INTEGRITY) {
                    Ok(()) if consistent => Ok(()),
                    Ok(()) => Err("FORGERY_INCONSISTENT".into()),
                    miss => miss,
                }
            }
            _ => {
                sql(&host, "DELETE FROM timestamps WHERE list_id = ?1", [id]);
                sql(&host, "DELETE FROM lists WHERE list_id = ?1", [id]);
                let claim_new = expect(host.visit(&request(&long, EPOCH, t_s, k), EPOCH), "DUPLICATE_LIST");
                // Restarting from the doctored store cannot hide it either.
                let restart = expect(host.reinit_enclave(), "ROOT_MISMATCH");
                claim_new.and(restart)
            }
        };
        report.record(detected, control);
    }
    report
}

/// Deletes the sealed blob to wipe the lists: the member key goes with it,
/// re-provisioning is rate-limited, and the blob is useless elsewhere.
pub fn reset_coupling(lab: &mut Lab, trials: usize, rng: &mut StdRng) -> AttackReport {
    let mut report = AttackReport::new("reset-coupling");
    let period = lab.pa.reprovision_period_secs;
    for trial in 0..trials {
        let t0 = EPOCH.saturating_add(trial as i64 * 10);
        let platform = lab.platform();
        let mut host = Host::in_memory(platform.clone()).expect("in-memory store");
        lab.provision(&mut host, t0).expect("first provisioning");
        let old_sealed = host.sealed().expect("provisioned").clone();
        let old_leaves = host.leaves().to_vec();

        let mut wiped = Host::in_memory(platform.clone()).expect("in-memory store");
        wiped.guard = Guard::new(ConfirmationPolicy::NeverAsk);
        let cannot_sign = expect(wiped.visit(&request("x.example", t0, t0, 10), t0), "NOT_PROVISIONED");

        let retry_at = t0.saturating_add(rng.gen_range(0..period));
        let limited = match lab.provision(&mut wiped, retry_at) {
            Err(HostError::Provisioning(msg)) if msg == PaError::ReprovisionLimited.to_string() => Ok(()),
            Err(e) => Err(e.code().to_owned()),
            Ok(()) => Err("REPROVISIONED".into()),
        };
        let elsewhere = match Enclave::init_mt(lab.platform(), old_leaves, &old_sealed) {
            Err(TeeError::SealAuthFailed) => Ok(()),
            Err(e) => Err(e.code().to_owned()),
            Ok(_) => Err("ACCEPTED".into()),
        };
        // After the period the PA issues a fresh key again.
        let control = lab.provision(&mut wiped, t0.saturating_add(period + 1)).is_ok();
        report.record(cannot_sign.and(limited).and(elsewhere), control);
    }
    report
}

/// Requests stamped in the future would poison the list's monotonicity;
/// bursts from one server would grow it. The guard refuses both before the
/// enclave runs.
pub fn future_timestamp(lab: &mut Lab, trials: usize, rng: &mut StdRng) -> AttackReport {
    let mut report = AttackReport::new("future-timestamp");
    let mut host = lab.client();
    host.guard = Guard::new(ConfirmationPolicy::NeverAsk);
    let skew = host.guard.clock_skew_secs;
    for trial in 0..trials {
        let now = EPOCH.saturating_add(trial as i64 * 1_000);
        let counter = host.platform().counter();
        let lists = host.store().list_count().expect("store readable");
        let t = now.saturating_add(skew + rng.gen_range(1..10_000_000));
        let refused = match host.visit(&request("dos.example", t, now, 10), now) {
            Err(HostError::Rejected(Rejection::FutureTimestamp)) => Ok(()),
            Err(e) => Err(e.code().to_owned()),
            Ok(_) => Err("ACCEPTED".into()),
        };
        let untouched = host.platform().counter() == counter
            && host.store().list_count().expect("store readable") == lists;

        let mut burst = Guard::new(ConfirmationPolicy::NeverAsk);
        let limit = burst.rate_limit;
        let mut flood = Ok(());
        for i in 0..=limit {
            let t = now.saturating_add(rng.gen_range(0..=skew));
            let d = burst.guard_request(&request("burst.example", t, now, 10), now.saturating_add(i as i64 % 2));
            let want_reject = i == limit;
            let rejected = d == Decision::Reject(Rejection::ServerRateLimit);
            if rejected != want_reject {
                flood = Err(format!("BURST_{i}"));
            }
        }

        let within = now.saturating_add(rng.gen_range(0..=skew));
        let control = Guard::new(ConfirmationPolicy::NeverAsk)
            .guard_request(&request("ok.example", within, now, 10), now)
            == Decision::Accept;
        let detected = match (refused, untouched) {
            (Ok(()), true) => flood,
            (Ok(()), false) => Err("STATE_CHANGED".into()),
            (miss, _) => miss,
        };
        report.record(detected, control);
    }
    report
}

/// Submits each captured proof again, to another verifier, and against a
/// different request.
pub fn proof_replay(lab: &mut Lab, trials: usize, rng: &mut StdRng) -> AttackReport {
    let mut report = AttackReport::new("proof-replay");
    let trusted = || TrustedPa {
        name: lab.pa.name.clone(),
        gpk: lab.pa.gpk().clone(),
        revoked: Default::default(),
    };
    let policy = ThresholdPolicy::new("replay.example", 60, 1_000);
    let verifier = Verifier::new(policy.clone(), Some(ServerKey::generate(&mut OsRng)), vec![trusted()]);
    let other = Verifier::new(policy, Some(ServerKey::generate(&mut OsRng)), vec![trusted()]);
    let mut host = lab.client();
    for trial in 0..trials {
        let now = EPOCH.saturating_add(10 + trial as i64 * 10);
        let req = verifier.make_request(now, &mut OsRng);
        let proof = host.visit(&req, now).expect("honest visit");
        let control = verifier.verify_proof(&proof, &req, now) == VerifyDecision::CaptchaPass;

        let later = now.saturating_add(rng.gen_range(0..verifier.nonce_ttl_secs));
        let fresh = verifier.make_request(later, &mut OsRng);
        let outcomes = [
            (verifier.verify_submission(&proof, later), Reason::Replay),
            (other.verify_submission(&proof, later), Reason::Unknown),
            (verifier.verify_proof(&proof, &fresh, later), Reason::DigestMismatch),
        ];
        let detected = outcomes
            .iter()
            .find(|(got, want)| *got != VerifyDecision::ShowCaptcha(*want))
            .map_or(Ok(()), |(got, _)| Err(format!("{got:?}")));
        report.record(detected, control);
    }
    report
}

/// Every attack at `trials` trials (omission at each position).
pub fn all(trials: usize, seed: u64) -> Vec<AttackReport> {
    use rand::SeedableRng;
    type Attack = fn(&mut Lab, usize, &mut StdRng) -> AttackReport;
    let attacks: [(u64, Attack); 8] = [
        (1, rollback),
        (2, |l, t, r| omission(l, Position::Start, t, r)),
        (3, |l, t, r| omission(l, Position::Middle, t, r)),
        (4, |l, t, r| omission(l, Position::End, t, r)),
        (5, substitution),
        (6, reset_coupling),
        (7, future_timestamp),
        (8, proof_replay),
    ];
    std::thread::scope(|s| {
        let handles: Vec<_> = attacks
            .iter()
            .map(|&(salt, attack)| {
                s.spawn(move || {
                    let mut lab = Lab::new();
                    let mut rng = StdRng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                    attack(&mut lab, trials, &mut rng)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("attack thread"))
            .collect()
    })
}
