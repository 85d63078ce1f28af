//! The server side: issues rate-proof requests and decides, from the proof
//! that comes back, whether to waive the CAPTCHA.

use std::collections::HashMap;
use std::sync::{Mutex, MutexGuard};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::{CryptoRng, RngCore};

use crate::client::wire::{Fields, WireError};
use crate::digest::Digest;
use crate::groupsig::{self, GroupPublicKey, RevocationList};
use crate::hashchain::Timestamp;
use crate::tee::{ProofResult, RateProof, RateProofRequest, ServerKey, GLOBAL_LIST};

pub const DEFAULT_NONCE_TTL_SECS: i64 = 300;

/// "At most `k` visits in the last `window_secs` seconds" on one list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdPolicy {
    pub list_name: String,
    pub window_secs: i64,
    pub k: u64,
    /// Ask the client to merge timestamps older than this many seconds.
    /// Ignored for the global list, which servers may not prune.
    pub prune_horizon_secs: Option<i64>,
}

impl ThresholdPolicy {
    pub fn new(list_name: impl Into<String>, window_secs: i64, k: u64) -> Self {
        assert!(window_secs > 0, "window must be positive");
        Self {
            list_name: list_name.into(),
            window_secs,
            k,
            prune_horizon_secs: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    Replay,
    Unknown,
    Expired,
    DigestMismatch,
    UntrustedPa,
    Revoked,
    Malformed,
}

impl Reason {
    pub fn code(self) -> &'static str {
        match self {
            Reason::Replay => "REPLAY",
            Reason::Unknown => "UNKNOWN",
            Reason::Expired => "EXPIRED",
            Reason::DigestMismatch => "DIGEST_MISMATCH",
            Reason::UntrustedPa => "UNTRUSTED_PA",
            Reason::Revoked => "REVOKED",
            Reason::Malformed => "MALFORMED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyDecision {
    CaptchaPass,
    ShowCaptcha(Reason),
}

impl VerifyDecision {
    pub fn is_pass(self) -> bool {
        self == VerifyDecision::CaptchaPass
    }

    pub fn to_fields(self) -> Fields {
        match self {
            VerifyDecision::CaptchaPass => Fields::new("VERDICT").put("decision", "CAPTCHA_PASS"),
            VerifyDecision::ShowCaptcha(r) => Fields::new("VERDICT")
                .put("decision", "SHOW_CAPTCHA")
                .put("reason", r.code()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrustedPa {
    pub name: String,
    pub gpk: GroupPublicKey,
    pub revoked: RevocationList,
}

/// What the verifier keeps about each session, for audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub request_digest: Digest,
    pub nonce: [u8; 16],
    pub proof: Vec<u8>,
    pub decision: VerifyDecision,
}

struct Ledger {
    outstanding: HashMap<Digest, (RateProofRequest, Timestamp)>,
    consumed: HashMap<Digest, Timestamp>,
}

/// Verifier state. All methods take `&self`; the nonce ledger is checked and
/// consumed under one lock.
pub struct Verifier {
    pub policy: ThresholdPolicy,
    key: Option<ServerKey>,
    trusted: Mutex<Vec<TrustedPa>>,
    ledger: Mutex<Ledger>,
    artifacts: Mutex<Vec<Artifact>>,
    pub nonce_ttl_secs: i64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Verifier {
    /// `key` signs requests and makes the list this server's own; it is
    /// ignored for the global list.
    pub fn new(policy: ThresholdPolicy, key: Option<ServerKey>, trusted: Vec<TrustedPa>) -> Self {
        let key = if policy.list_name == GLOBAL_LIST { None } else { key };
        Self {
            policy,
            key,
            trusted: Mutex::new(trusted),
            ledger: Mutex::new(Ledger {
                outstanding: HashMap::new(),
                consumed: HashMap::new(),
            }),
            artifacts: Mutex::new(Vec::new()),
            nonce_ttl_secs: DEFAULT_NONCE_TTL_SECS,
        }
    }

    pub fn server_public_key(&self) -> Option<Vec<u8>> {
        self.key.as_ref().map(ServerKey::public_bytes)
    }

    pub fn trust(&self, pa: TrustedPa) {
        lock(&self.trusted).push(pa);
    }

    /// Installs a newer revocation list for the PA called `name`.
    pub fn set_revocation_list(&self, name: &str, revoked: RevocationList) -> bool {
        match lock(&self.trusted).iter_mut().find(|p| p.name == name) {
            Some(pa) => {
                pa.revoked = revoked;
                true
            }
            None => false,
        }
    }

    pub fn artifacts(&self) -> Vec<Artifact> {
        lock(&self.artifacts).clone()
    }

    pub fn outstanding(&self) -> usize {
        lock(&self.ledger).outstanding.len()
    }

    /// A fresh request for the policy window ending at `now`.
    pub fn make_request<R: RngCore + CryptoRng>(&self, now: Timestamp, rng: &mut R) -> RateProofRequest {
        let p = &self.policy;
        let mut nonce = [0u8; 16];
        rng.fill_bytes(&mut nonce);
        let prune_point = match p.prune_horizon_secs {
            Some(h) if p.list_name != GLOBAL_LIST => Some(now.saturating_add(-h)),
            _ => None,
        };
        let mut req = RateProofRequest {
            t: now,
            t_s: now.saturating_add(-p.window_secs),
            k: p.k,
            list_name: p.list_name.clone(),
            server_pk: None,
            server_sig: None,
            prune_point,
            nonce,
        };
        if let Some(key) = &self.key {
            req.sign_with(key);
        }
        let mut ledger = lock(&self.ledger);
        self.expire(&mut ledger, now);
        ledger.outstanding.insert(req.digest(), (req.clone(), now));
        req
    }

    fn expire(&self, ledger: &mut Ledger, now: Timestamp) {
        let ttl = self.nonce_ttl_secs;
        ledger.consumed.retain(|_, at| at.saturating_add(ttl) >= now);
    }

    /// Decides on `proof` for the request the client claims to answer.
    pub fn verify_proof(&self, proof: &RateProof, request: &RateProofRequest, now: Timestamp) -> VerifyDecision {
        if proof.request_digest != request.digest() {
            return self.record(proof, None, VerifyDecision::ShowCaptcha(Reason::DigestMismatch));
        }
        self.verify_submission(proof, now)
    }

    /// Decides on a proof alone, finding its request by digest.
    pub fn verify_submission(&self, proof: &RateProof, now: Timestamp) -> VerifyDecision {
        let digest = proof.request_digest;
        let mut ledger = lock(&self.ledger);
        self.expire(&mut ledger, now);
        let Some((request, issued)) = ledger.outstanding.get(&digest).cloned() else {
            let reason = if ledger.consumed.contains_key(&digest) {
                Reason::Replay
            } else {
                Reason::Unknown
            };
            drop(ledger);
            return self.record(proof, None, VerifyDecision::ShowCaptcha(reason));
        };
        if issued.saturating_add(self.nonce_ttl_secs) < now {
            ledger.outstanding.remove(&digest);
            drop(ledger);
            return self.record(proof, Some(&request), VerifyDecision::ShowCaptcha(Reason::Expired));
        }
        let decision = self.check_signature(proof);
        if decision.is_pass() {
            ledger.outstanding.remove(&digest);
            ledger.consumed.insert(digest, issued);
        }
        drop(ledger);
        self.record(proof, Some(&request), decision)
    }

    fn check_signature(&self, proof: &RateProof) -> VerifyDecision {
        if proof.result != ProofResult::Pass {
            return VerifyDecision::ShowCaptcha(Reason::Malformed);
        }
        let message = RateProof::signed_message(&proof.request_digest, proof.result);
        let trusted = lock(&self.trusted);
        let mut revoked = false;
        for pa in trusted.iter() {
            if groupsig::verify(&pa.gpk, &message, &proof.signature, &pa.revoked) {
                return VerifyDecision::CaptchaPass;
            }
            if !pa.revoked.is_empty()
                && groupsig::verify(&pa.gpk, &message, &proof.signature, &RevocationList::new())
            {
                revoked = true;
            }
        }
        VerifyDecision::ShowCaptcha(if revoked { Reason::Revoked } else { Reason::UntrustedPa })
    }

    fn record(&self, proof: &RateProof, request: Option<&RateProofRequest>, decision: VerifyDecision) -> VerifyDecision {
        lock(&self.artifacts).push(Artifact {
            request_digest: proof.request_digest,
            nonce: request.map(|r| r.nonce).unwrap_or_default(),
            proof: proof.to_bytes(),
            decision,
        });
        decision
    }

    /// Records a submission that could not even be parsed.
    pub fn malformed(&self) -> VerifyDecision {
        VerifyDecision::ShowCaptcha(Reason::Malformed)
    }
}

/// Static verifier configuration in the wire's `key=value` form:
///
/// ```text
/// type=VERIFIER_CONFIG
/// list=example.com
/// window=86400
/// k=10
/// prune_horizon=2592000
/// pa.<name>=<base64 group public key>
/// ```
#[derive(Debug, Clone)]
pub struct VerifierConfig {
    pub policy: ThresholdPolicy,
    pub trusted: Vec<TrustedPa>,
}

impl VerifierConfig {
    pub fn parse(text: &str) -> Result<Self, WireError> {
        let f = Fields::decode(text.as_bytes())?;
        if f.kind != "VERIFIER_CONFIG" {
            return Err(WireError::UnknownType(f.kind));
        }
        let window: i64 = f.parse("window")?;
        if window <= 0 {
            return Err(WireError::BadField("window"));
        }
        let mut policy = ThresholdPolicy::new(f.require("list")?, window, f.parse("k")?);
        policy.prune_horizon_secs = f.parse_opt("prune_horizon")?;
        let mut trusted = Vec::new();
        for (key, value) in f.pairs() {
            let Some(name) = key.strip_prefix("pa.") else {
                continue;
            };
            let bytes = B64.decode(value).map_err(|_| WireError::BadField("pa"))?;
            let gpk = GroupPublicKey::from_bytes(&bytes).map_err(|_| WireError::BadField("pa"))?;
            trusted.push(TrustedPa {
                name: name.to_owned(),
                gpk,
                revoked: RevocationList::new(),
            });
        }
        Ok(Self { policy, trusted })
    }

    pub fn render(&self) -> String {
        let p = &self.policy;
        let mut f = Fields::new("VERIFIER_CONFIG")
            .put("list", &p.list_name)
            .put("window", p.window_secs)
            .put("k", p.k)
            .put_opt("prune_horizon", p.prune_horizon_secs);
        for pa in &self.trusted {
            f = f.put_bytes(&format!("pa.{}", pa.name), &pa.gpk.to_bytes());
        }
        String::from_utf8(f.encode()).expect("fields are UTF-8")
    }
}
