//! Phase-segmented latency of one rate-proof request.
//!
//! Every measurement runs once untimed as warm-up, then `runs` times (at
//! least [`MIN_RUNS`]); reports are the mean.

use std::time::{Duration, Instant};

use rand::rngs::OsRng;

use cacti_core::client::wire::{encode_frame, Message};
use cacti_core::client::Host;
use cacti_core::groupsig::{self, GroupManager, RevocationList};
use cacti_core::hashchain::ListInfo;
use cacti_core::tee::{verify_server_signature, RateProofRequest, ServerKey};
use cacti_core::Timestamp;

use crate::lab::{request, Lab, EPOCH};

pub const MIN_RUNS: usize = 10;
const SITE: &str = "bench.example";

/// Mean milliseconds per phase, and bytes per exchange.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseReport {
    pub init_enclave: f64,
    pub pre_enclave: f64,
    pub in_enclave: f64,
    pub post_enclave: f64,
    /// Server-side signature work: signing the request and verifying the
    /// group signature on the proof.
    pub sign_ops: f64,
    pub bytes_sent: usize,
    pub bytes_received: usize,
}

impl PhaseReport {
    pub fn total(&self) -> f64 {
        self.init_enclave + self.pre_enclave + self.in_enclave + self.post_enclave + self.sign_ops
    }

    fn mean(runs: &[PhaseReport]) -> PhaseReport {
        let n = runs.len() as f64;
        let avg = |f: fn(&PhaseReport) -> f64| runs.iter().map(f).sum::<f64>() / n;
        let avg_bytes = |f: fn(&PhaseReport) -> usize| {
            (runs.iter().map(f).sum::<usize>() as f64 / n).round() as usize
        };
        PhaseReport {
            init_enclave: avg(|r| r.init_enclave),
            pre_enclave: avg(|r| r.pre_enclave),
            in_enclave: avg(|r| r.in_enclave),
            post_enclave: avg(|r| r.post_enclave),
            sign_ops: avg(|r| r.sign_ops),
            bytes_sent: avg_bytes(|r| r.bytes_sent),
            bytes_received: avg_bytes(|r| r.bytes_received),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListMode {
    New,
    Existing,
}

impl std::str::FromStr for ListMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "new" | "new_list" => Ok(Self::New),
            "existing" | "existing_list" => Ok(Self::Existing),
            other => Err(format!("unknown list mode {other:?}")),
        }
    }
}

impl std::fmt::Display for ListMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::New => "new",
            Self::Existing => "existing",
        })
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn repeat(runs: usize, mut once: impl FnMut() -> PhaseReport) -> PhaseReport {
    once();
    let runs: Vec<_> = (0..runs.max(MIN_RUNS)).map(|_| once()).collect();
    PhaseReport::mean(&runs)
}

/// One signed request against a freshly restarted enclave.
fn measure(lab: &Lab, host: &mut Host, server: &ServerKey, mut req: RateProofRequest) -> PhaseReport {
    let init = host.reinit_enclave().expect("sealed state present");

    let started = Instant::now();
    req.sign_with(server);
    let mut sign_ops = started.elapsed();
    let challenge = Message::VisitRequest {
        request: req.clone(),
        reply_url: "/proof".into(),
    };

    let (proof, times) = host.visit_timed(&req, req.t).expect("request within limit");

    let started = Instant::now();
    let valid = proof.verify(lab.pa.gpk(), &RevocationList::new());
    sign_ops += started.elapsed();
    assert!(valid, "benchmark proof must verify");

    let frame = |m: Message| encode_frame(&m.encode()).expect("small frame").len();
    PhaseReport {
        init_enclave: ms(init),
        pre_enclave: ms(times.pre_enclave),
        in_enclave: ms(times.in_enclave),
        post_enclave: ms(times.post_enclave),
        sign_ops: ms(sign_ops),
        bytes_received: frame(challenge),
        bytes_sent: frame(Message::VisitResponse(Ok(proof))),
    }
}

/// A window covering every one of `n` stored timestamps.
pub fn bench_timestamps(lab: &mut Lab, n: usize, runs: usize) -> PhaseReport {
    assert!(n >= 1);
    let server = ServerKey::generate(&mut OsRng);
    let first = EPOCH.0 - 2 * n as i32;
    let stamps: Vec<Timestamp> = (0..n as i32).map(|i| Timestamp(first + 2 * i)).collect();
    repeat(runs, || {
        let mut host = lab.client();
        let info = ListInfo::new(SITE).with_owner(server.public_bytes());
        host.seed_lists(&[(info, stamps.clone())])
            .expect("fixture lists");
        let req = request(SITE, EPOCH, stamps[0], n as u64);
        measure(lab, &mut host, &server, req)
    })
}

/// `s` lists holding one timestamp each; the request targets one of them
/// or a list the host has never seen.
pub fn bench_lists(lab: &mut Lab, s: usize, mode: ListMode, runs: usize) -> PhaseReport {
    assert!(s >= 1);
    let server = ServerKey::generate(&mut OsRng);
    let lists: Vec<(ListInfo, Vec<Timestamp>)> = (0..s)
        .map(|i| {
            let stamp = Timestamp(EPOCH.0 - 1 - i as i32);
            let info = ListInfo::new(format!("site{i:05}.example")).with_owner(server.public_bytes());
            (info, vec![stamp])
        })
        .collect();
    let target = match mode {
        ListMode::Existing => lists[s / 2].0.name.clone(),
        ListMode::New => "unseen.example".to_owned(),
    };
    repeat(runs, || {
        let mut host = lab.client();
        host.seed_lists(&lists).expect("fixture lists");
        let req = request(&target, EPOCH, Timestamp(EPOCH.0 - 86_400), 1);
        measure(lab, &mut host, &server, req)
    })
}

/// Mean milliseconds per signature operation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SignatureReport {
    pub ecdsa_sign: f64,
    pub ecdsa_verify: f64,
    pub group_sign: f64,
    pub group_verify: f64,
}

pub fn bench_signatures(runs: usize) -> SignatureReport {
    let server = ServerKey::generate(&mut OsRng);
    let pk = server.public_bytes();
    let mut manager = GroupManager::setup(128, &mut OsRng).expect("supported level");
    let (join, pending) = groupsig::begin_join(manager.gpk(), &mut OsRng).expect("valid gpk");
    let issued = manager.join(&join, &mut OsRng).expect("valid join");
    let member = pending.finish(&issued).expect("valid credential");
    let revoked = RevocationList::new();
    let msg = [0x5a; 64];

    let once = || {
        let t = Instant::now();
        let sig = server.sign(&msg);
        let ecdsa_sign = t.elapsed();
        let t = Instant::now();
        assert!(verify_server_signature(&pk, &msg, &sig));
        let ecdsa_verify = t.elapsed();
        let t = Instant::now();
        let gsig = groupsig::sign(&member, &msg, &revoked, &mut OsRng).expect("member key");
        let group_sign = t.elapsed();
        let t = Instant::now();
        assert!(groupsig::verify(manager.gpk(), &msg, &gsig, &revoked));
        let group_verify = t.elapsed();
        [ecdsa_sign, ecdsa_verify, group_sign, group_verify].map(ms)
    };
    once();
    let runs = runs.max(MIN_RUNS);
    let mut sum = [0.0; 4];
    for _ in 0..runs {
        for (s, x) in sum.iter_mut().zip(once()) {
            *s += x;
        }
    }
    let [ecdsa_sign, ecdsa_verify, group_sign, group_verify] = sum.map(|s| s / runs as f64);
    SignatureReport {
        ecdsa_sign,
        ecdsa_verify,
        group_sign,
        group_verify,
    }
}

/// Coefficient of determination of the least-squares line through the
/// points. 1.0 when `ys` is constant and fitted exactly.
pub fn linear_r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    1.0 - sse / syy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_of_known_sets() {
        assert!((linear_r_squared(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        // y = x² over 0..=3: best line 3x - 1, SSE 4, SST 49.
        let r2 = linear_r_squared(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 4.0, 9.0]);
        assert!((r2 - (1.0 - 4.0 / 49.0)).abs() < 1e-12, "{r2}");
    }

    #[test]
    fn total_is_the_sum_of_phases() {
        let r = PhaseReport {
            init_enclave: 1.0,
            pre_enclave: 2.0,
            in_enclave: 3.0,
            post_enclave: 4.0,
            sign_ops: 5.0,
            ..Default::default()
        };
        assert_eq!(r.total(), 15.0);
        assert_eq!(PhaseReport::mean(&[r, PhaseReport::default()]).total(), 7.5);
    }
}
