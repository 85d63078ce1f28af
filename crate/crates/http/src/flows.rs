//! The browser-extension side of the HTTP exchanges, driving a local
//! [`Host`].

use thiserror::Error;

use cacti_core::client::wire::{Fields, Message, WireError};
use cacti_core::client::{Host, HostError};
use cacti_core::groupsig::{GroupPublicKey, JoinResponse, RevocationList};
use cacti_core::Timestamp;

use crate::client::{Exchange, HttpClient, HttpError};
use crate::server::{GPK, JOIN, JOIN_CHALLENGE, JOIN_RESPONSE, REVOCATION_LIST};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Host(#[from] HostError),
    #[error("unexpected {status} reply: {body}")]
    Status { status: u16, body: String },
}

fn expect_ok(ex: &Exchange, kind: &str) -> Result<Fields, FlowError> {
    if ex.status != 200 {
        return Err(FlowError::Status {
            status: ex.status,
            body: String::from_utf8_lossy(&ex.body).into_owned(),
        });
    }
    let f = Fields::decode(&ex.body)?;
    if f.kind != kind {
        return Err(WireError::UnknownType(f.kind).into());
    }
    Ok(f)
}

pub fn fetch_gpk(pa: &HttpClient) -> Result<GroupPublicKey, FlowError> {
    let f = expect_ok(&pa.get("/gpk")?, GPK)?;
    GroupPublicKey::from_bytes(&f.bytes("gpk")?).map_err(|_| WireError::BadField("gpk").into())
}

pub fn fetch_revocation_list(pa: &HttpClient) -> Result<RevocationList, FlowError> {
    let f = expect_ok(&pa.get("/revocation-list")?, REVOCATION_LIST)?;
    RevocationList::from_bytes(&f.bytes("list")?).map_err(|_| WireError::BadField("list").into())
}

/// Attests to the PA behind `pa` and joins its group.
pub fn provision(host: &mut Host, pa: &HttpClient) -> Result<GroupPublicKey, FlowError> {
    let gpk = fetch_gpk(pa)?;
    let challenge = expect_ok(&pa.get("/join-challenge")?, JOIN_CHALLENGE)?.bytes("challenge")?;
    host.provision(&gpk, &challenge, |report, request| {
        let body = Fields::new(JOIN)
            .put_bytes("report", &report.to_bytes())
            .put_bytes("request", &request.0)
            .encode();
        let ex = pa.post("/join", &body).map_err(|e| e.to_string())?;
        let f = expect_ok(&ex, JOIN_RESPONSE).map_err(|e| e.to_string())?;
        let bytes = f.bytes("response").map_err(|e| e.to_string())?;
        JoinResponse::from_bytes(&bytes).map_err(|e| e.to_string())
    })?;
    Ok(gpk)
}

/// One challenge → proof exchange and the verifier's verdict.
#[derive(Debug, Clone)]
pub struct Visit {
    pub challenge: Exchange,
    /// Absent when the client produced no proof.
    pub submission: Option<Exchange>,
    pub outcome: VisitOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VisitOutcome {
    CaptchaPass,
    /// The verifier answered SHOW_CAPTCHA with this reason.
    ShowCaptcha(String),
    /// The client refused or failed to produce a proof; the page falls back
    /// to a CAPTCHA.
    NoProof(String),
}

impl Visit {
    pub fn bytes_sent(&self) -> usize {
        self.challenge.bytes_sent + self.submission.as_ref().map_or(0, |e| e.bytes_sent)
    }

    pub fn bytes_received(&self) -> usize {
        self.challenge.bytes_received + self.submission.as_ref().map_or(0, |e| e.bytes_received)
    }
}

pub fn visit(host: &mut Host, verifier: &HttpClient, now: Timestamp) -> Result<Visit, FlowError> {
    let challenge = verifier.get("/challenge")?;
    if challenge.status != 200 {
        return Err(FlowError::Status {
            status: challenge.status,
            body: String::from_utf8_lossy(&challenge.body).into_owned(),
        });
    }
    let Message::VisitRequest { request, reply_url } = Message::decode(&challenge.body)? else {
        return Err(WireError::UnknownType("expected VISIT_REQUEST".into()).into());
    };
    let proof = match host.visit(&request, now) {
        Ok(p) => p,
        Err(e) => {
            return Ok(Visit {
                challenge,
                submission: None,
                outcome: VisitOutcome::NoProof(e.code().to_owned()),
            })
        }
    };
    let path = if reply_url.starts_with('/') { reply_url } else { "/proof".into() };
    let body = Message::VisitResponse(Ok(proof)).encode();
    let submission = verifier.post(&path, &body)?;
    let verdict = Fields::decode(&submission.body)?;
    let outcome = match verdict.require("decision")? {
        "CAPTCHA_PASS" => VisitOutcome::CaptchaPass,
        _ => VisitOutcome::ShowCaptcha(verdict.get("reason").unwrap_or_default().to_owned()),
    };
    Ok(Visit {
        challenge,
        submission: Some(submission),
        outcome,
    })
}

