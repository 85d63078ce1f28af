//! `get_rate` against a brute-force count over the raw timestamps.
//!
//! Each trial builds a random store of lists, some already pruned, from a
//! known raw history; asks for a random (t_s, k, t_P); and compares the
//! enclave's decision and reported count with a count over the history.

use std::time::{Duration, Instant};

use rand::rngs::{OsRng, StdRng};
use rand::{Rng, SeedableRng};

use cacti_core::client::{assemble_evidence, Store};
use cacti_core::groupsig::{GroupManager, RevocationList};
use cacti_core::hashchain::ListInfo;
use cacti_core::mht::MerkleTree;
use cacti_core::tee::{Enclave, Platform, TeeError, GLOBAL_LIST};
use cacti_core::Timestamp;

use crate::lab::request;

pub const MAX_LISTS: usize = 64;
pub const MAX_TIMESTAMPS: usize = 256;
const SPAN: i32 = 10_000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleReport {
    pub trials: usize,
    pub passes: usize,
    /// Decision or reported count differs from the brute-force count.
    pub mismatches: usize,
    /// Reported count below the true count.
    pub undercounts: usize,
    /// Reported count differs from the true count where the prune point is
    /// before the window (where it must be exact).
    pub inexact: usize,
    /// A requested prune left the list in the wrong state.
    pub bad_merges: usize,
    pub elapsed: Duration,
    pub first_failure: Option<String>,
}

impl OracleReport {
    pub fn is_clean(&self) -> bool {
        self.trials > 0
            && self.mismatches == 0
            && self.undercounts == 0
            && self.inexact == 0
            && self.bad_merges == 0
    }
}

struct RawList {
    info: ListInfo,
    raw: Vec<Timestamp>,
    stored: Vec<Timestamp>,
}

fn random_list(rng: &mut StdRng, name: String) -> RawList {
    let n = rng.gen_range(1..=MAX_TIMESTAMPS);
    let mut raw: Vec<Timestamp> = (0..n).map(|_| Timestamp(rng.gen_range(0..SPAN))).collect();
    raw.sort();
    raw.dedup();
    let mut info = ListInfo::new(name);
    let mut stored = raw.clone();
    if rng.gen_bool(0.4) {
        let lo = raw[0].0;
        let hi = raw[raw.len() - 1].0 + 1;
        let t_p = Timestamp(rng.gen_range(lo..=hi));
        let split = raw.partition_point(|&t| t < t_p);
        info.prune_point = Some(t_p);
        info.prune_count = split as u64;
        stored = raw[split..].to_vec();
    }
    RawList { info, raw, stored }
}

fn provisioned_enclave() -> Enclave {
    let mut manager = GroupManager::setup(128, &mut OsRng).expect("supported level");
    let mut enclave = Enclave::unprovisioned(Platform::in_memory(&mut OsRng));
    let join = enclave.begin_provisioning(manager.gpk()).expect("unprovisioned");
    let resp = manager.join(&join, &mut OsRng).expect("valid join");
    enclave.provision(&resp).expect("valid credential");
    enclave
}

pub fn equivalence(trials: usize, seed: u64) -> OracleReport {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut enclave = provisioned_enclave();
    let revoked = RevocationList::new();
    let mut report = OracleReport::default();
    let fail = |report: &mut OracleReport, what: String| {
        if report.first_failure.is_none() {
            report.first_failure = Some(what);
        }
    };

    for trial in 0..trials {
        let count = rng.gen_range(1..=MAX_LISTS);
        let mut lists: Vec<RawList> = (0..count)
            .map(|i| {
                let name = if i == 0 && rng.gen_bool(0.25) {
                    GLOBAL_LIST.to_owned()
                } else {
                    format!("site{i:02}.example")
                };
                random_list(&mut rng, name)
            })
            .collect();
        lists.sort_by(|a, b| a.info.name.cmp(&b.info.name));
        lists.dedup_by(|a, b| a.info.name == b.info.name);

        let mut store = Store::in_memory().expect("in-memory store");
        for l in &lists {
            store.insert_list(&l.info, &l.stored).expect("insert");
        }
        let leaves = store.leaves().expect("leaves");
        let tree = MerkleTree::build(leaves.clone()).expect("sorted leaves");
        enclave.install_lists(leaves).expect("fixture install");

        // Mostly existing lists; sometimes one the store has never seen.
        let fresh = rng.gen_bool(0.1);
        let target = if fresh {
            None
        } else {
            Some(&lists[rng.gen_range(0..lists.len())])
        };
        let name = target.map_or_else(|| "unseen.example".to_owned(), |l| l.info.name.clone());
        let raw: &[Timestamp] = target.map_or(&[], |l| &l.raw);
        let latest = raw.last().map_or(0, |t| t.0).max(
            target
                .and_then(|l| l.info.prune_point)
                .map_or(0, |t| t.0),
        );
        let t = Timestamp(latest + rng.gen_range(1..100));
        let t_s = Timestamp(rng.gen_range(0..=t.0));
        let truth = raw.iter().filter(|&&x| x >= t_s).count() as u64;
        let k = (truth as i64 + rng.gen_range(-3..=3)).max(0) as u64;
        let mut req = request(&name, t, t_s, k);
        if name != GLOBAL_LIST && rng.gen_bool(0.3) {
            req.prune_point = Some(Timestamp(rng.gen_range(0..=t.0)));
        }

        // What the enclave must report: in-window stored entries plus the
        // whole pruned count when the prune point reaches into the window.
        let expected = match target {
            None => 0,
            Some(l) => {
                l.stored.iter().filter(|&&x| x >= t_s).count() as u64
                    + l.info.pruned_contribution(t_s)
            }
        };
        let exact_required = target
            .and_then(|l| l.info.prune_point)
            .is_none_or(|tp| tp < t_s);

        let evidence = assemble_evidence(&store, &tree, &req, false).expect("evidence");
        let outcome = enclave.get_rate(&req, &evidence, &revoked);
        report.trials += 1;
        let reported = match &outcome {
            Ok(o) => {
                report.passes += 1;
                o.update.count
            }
            Err(TeeError::RateExceeded { count, .. }) => *count,
            Err(e) => {
                report.mismatches += 1;
                fail(&mut report, format!("trial {trial}: unexpected {e}"));
                continue;
            }
        };
        if outcome.is_ok() != (expected <= k) || reported != expected {
            report.mismatches += 1;
            fail(
                &mut report,
                format!("trial {trial}: reported {reported}, expected {expected}, k {k}"),
            );
        }
        if reported < truth {
            report.undercounts += 1;
            fail(&mut report, format!("trial {trial}: {reported} < true {truth}"));
        }
        if exact_required && reported != truth {
            report.inexact += 1;
            fail(&mut report, format!("trial {trial}: {reported} != true {truth}"));
        }

        // A granted prune merges exactly the stored entries before t_P.
        if let (Ok(o), Some(l), Some(tp)) = (&outcome, target, req.prune_point) {
            let current = l.info.prune_point;
            let info = &o.update.info;
            let ok = if current.is_none_or(|c| tp > c) {
                let merged = l.stored.iter().filter(|&&x| x < tp).count() as u64;
                info.prune_point == Some(tp) && info.prune_count == l.info.prune_count + merged
            } else {
                info.prune_point == current && info.prune_count == l.info.prune_count
            };
            if !ok {
                report.bad_merges += 1;
                fail(&mut report, format!("trial {trial}: merge left {info:?}"));
            }
        }
    }
    report.elapsed = started.elapsed();
    report
}
