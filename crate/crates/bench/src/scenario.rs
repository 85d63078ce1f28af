//! Two clients, one verifier, over HTTP; then a linkage audit of what the
//! verifier kept.

use std::collections::HashMap;

use cacti_core::client::wire::Message;
use cacti_core::groupsig::SIGNATURE_FIELDS;
use cacti_core::services::{Artifact, ThresholdPolicy};
use cacti_core::tee::RateProof;
use cacti_core::Digest;
use cacti_http::flows::{self, FlowError, VisitOutcome};
use cacti_http::HttpError;

use crate::deploy::Deployment;

pub const CLIENTS: usize = 2;
pub const SESSIONS: usize = 10;
/// Ten earlier visits are within the limit, so the eleventh still passes.
pub const K: u64 = SESSIONS as u64;

#[derive(Debug, Clone, Default)]
pub struct ScenarioReport {
    /// Per client, whether each of the first `SESSIONS` visits passed.
    pub sessions: Vec<Vec<bool>>,
    /// Per client, whether its visits after the pushed client went over `K`
    /// still passed.
    pub after_push: Vec<bool>,
    /// Outcome of the visit that took the pushed client over `K`.
    pub pushed_outcome: Option<VisitOutcome>,
    pub artifacts: usize,
    pub linkage: Vec<Linkage>,
}

impl ScenarioReport {
    pub fn all_sessions_passed(&self) -> bool {
        self.sessions.len() == CLIENTS && self.sessions.iter().flatten().all(|&p| p)
    }

    /// Only client 0 was flipped.
    pub fn only_pushed_client_flipped(&self) -> bool {
        let shown = matches!(
            self.pushed_outcome,
            Some(VisitOutcome::ShowCaptcha(_) | VisitOutcome::NoProof(_))
        );
        shown && self.after_push.iter().skip(1).all(|&p| p)
    }

    pub fn is_clean(&self) -> bool {
        self.all_sessions_passed() && self.only_pushed_client_flipped() && self.linkage.is_empty()
    }
}

/// A field value seen in more than one session while not being the same
/// in every session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linkage {
    pub field: String,
    pub clients: Vec<usize>,
}

/// Splits a stored artifact into named fields, down to the group-signature
/// components.
pub fn artifact_fields(a: &Artifact) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![
        ("request_digest".to_owned(), a.request_digest.to_vec()),
        ("request_nonce".to_owned(), a.nonce.to_vec()),
    ];
    let Ok(proof) = RateProof::from_bytes(&a.proof) else {
        out.push(("proof".to_owned(), a.proof.clone()));
        return out;
    };
    let sig = &proof.signature;
    out.push(("proof.request_digest".into(), proof.request_digest.to_vec()));
    out.push(("proof.result".into(), vec![proof.result as u8]));
    out.push(("sig.scheme_id".into(), sig.scheme_id.as_bytes().to_vec()));
    out.push(("sig.payload_digest".into(), sig.payload_digest.to_vec()));
    out.push(("sig.nonce".into(), sig.nonce.to_vec()));
    let mut end = 0;
    for &(name, from, to) in SIGNATURE_FIELDS {
        out.push((format!("sig.{name}"), sig.sig_material.get(from..to).unwrap_or_default().to_vec()));
        end = to;
    }
    out.push(("sig.tail".into(), sig.sig_material.get(end..).unwrap_or_default().to_vec()));
    out
}

/// Finds every field whose value repeats across sessions without being
/// constant over all of them. `sessions` pairs each artifact with the client
/// that produced it.
pub fn linkage_audit(sessions: &[(usize, Artifact)]) -> Vec<Linkage> {
    let mut by_field: HashMap<String, Vec<(usize, Vec<u8>)>> = HashMap::new();
    for (client, a) in sessions {
        for (field, value) in artifact_fields(a) {
            by_field.entry(field).or_default().push((*client, value));
        }
    }
    let mut found = Vec::new();
    for (field, values) in by_field {
        if values.iter().all(|(_, v)| *v == values[0].1) {
            continue;
        }
        let mut seen: HashMap<&[u8], Vec<usize>> = HashMap::new();
        for (client, v) in &values {
            seen.entry(v.as_slice()).or_default().push(*client);
        }
        let mut clients: Vec<usize> = seen
            .into_values()
            .filter(|c| c.len() > 1)
            .flatten()
            .collect();
        if !clients.is_empty() {
            clients.sort();
            clients.dedup();
            found.push(Linkage { field, clients });
        }
    }
    found.sort_by(|a, b| a.field.cmp(&b.field));
    found
}

fn request_digest(challenge: &[u8]) -> Option<Digest> {
    match Message::decode(challenge).ok()? {
        Message::VisitRequest { request, .. } => Some(request.digest()),
        _ => None,
    }
}

pub fn run() -> Result<ScenarioReport, FlowError> {
    let d = Deployment::start(ThresholdPolicy::new("example.com", 86_400, K)).map_err(HttpError::from)?;
    let verifier = d.verifier_client();
    let mut hosts = Vec::new();
    for _ in 0..CLIENTS {
        let mut host = d.host();
        flows::provision(&mut host, &d.pa_client())?;
        hosts.push(host);
    }

    let mut report = ScenarioReport {
        sessions: vec![Vec::new(); CLIENTS],
        ..Default::default()
    };
    let mut owner: HashMap<Digest, usize> = HashMap::new();
    let mut visit = |i: usize, host: &mut cacti_core::client::Host| -> Result<VisitOutcome, FlowError> {
        // Well clear of each host's own per-site request limit.
        let now = d.advance(30);
        let v = flows::visit(host, &verifier, now)?;
        if let Some(digest) = request_digest(&v.challenge.body) {
            owner.insert(digest, i);
        }
        Ok(v.outcome)
    };

    for _ in 0..SESSIONS {
        for (i, host) in hosts.iter_mut().enumerate() {
            let outcome = visit(i, host)?;
            report.sessions[i].push(outcome == VisitOutcome::CaptchaPass);
        }
    }

    // Client 0: one more visit is still within K, the next is not.
    let (first, rest) = hosts.split_first_mut().expect("two clients");
    let at_limit = visit(0, first)?;
    let over = visit(0, first)?;
    report.after_push.push(at_limit == VisitOutcome::CaptchaPass);
    report.pushed_outcome = Some(over);
    for (j, host) in rest.iter_mut().enumerate() {
        report.after_push.push(visit(j + 1, host)? == VisitOutcome::CaptchaPass);
    }

    let artifacts = d.verifier_state.verifier.artifacts();
    report.artifacts = artifacts.len();
    let attributed: Vec<(usize, Artifact)> = artifacts
        .into_iter()
        .filter_map(|a| owner.get(&a.request_digest).map(|&c| (c, a)))
        .collect();
    report.linkage = linkage_audit(&attributed);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cacti_core::services::VerifyDecision;

    fn artifact(nonce: u8, proof: Vec<u8>) -> Artifact {
        Artifact {
            request_digest: [nonce; 32],
            nonce: [nonce; 16],
            proof,
            decision: VerifyDecision::CaptchaPass,
        }
    }

    #[test]
    fn audit_flags_repeats_but_not_constants() {
        // Unparseable proofs are kept whole: a constant blob is fine...
        let same = [(0, artifact(1, vec![7; 8])), (1, artifact(2, vec![7; 8]))];
        assert!(linkage_audit(&same).is_empty());
        // ...a blob shared by two of three sessions is not.
        let planted = [
            (0, artifact(1, vec![7; 8])),
            (0, artifact(2, vec![7; 8])),
            (1, artifact(3, vec![9; 8])),
        ];
        assert_eq!(
            linkage_audit(&planted),
            vec![Linkage {
                field: "proof".into(),
                clients: vec![0]
            }]
        );
    }
}
