use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use rand::rngs::OsRng;
use tokio::sync::oneshot;

use cacti_core::client::wire::{Fields, Message};
use cacti_core::client::ErrorReply;
use cacti_core::groupsig::JoinRequest;
use cacti_core::services::{ProvisioningAuthority, Reason, Verifier, VerifyDecision};
use cacti_core::tee::AttestationReport;
use cacti_core::Timestamp;

pub const JOIN_CHALLENGE: &str = "JOIN_CHALLENGE";
pub const JOIN: &str = "JOIN";
pub const JOIN_RESPONSE: &str = "JOIN_RESPONSE";
pub const GPK: &str = "GPK";
pub const REVOCATION_LIST: &str = "REVOCATION_LIST";

/// Source of "now" for the services; tests pin it.
pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(Timestamp::now)
}

fn text(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "text/plain")], body).into_response()
}

fn error(status: StatusCode, code: &str, detail: impl ToString) -> Response {
    text(status, Message::Error(ErrorReply::new(code, detail)).encode())
}

#[derive(Clone)]
pub struct PaState {
    pub pa: Arc<Mutex<ProvisioningAuthority>>,
    pub clock: Clock,
}

impl PaState {
    pub fn new(pa: ProvisioningAuthority, clock: Clock) -> Self {
        Self {
            pa: Arc::new(Mutex::new(pa)),
            clock,
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ProvisioningAuthority> {
        self.pa.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// `GET /join-challenge`, `POST /join`, `GET /gpk`, `GET /revocation-list`.
pub fn pa_router(state: PaState) -> Router {
    Router::new()
        .route("/join-challenge", get(join_challenge))
        .route("/join", post(join))
        .route("/gpk", get(gpk))
        .route("/revocation-list", get(revocation_list))
        .with_state(state)
}

async fn join_challenge(State(s): State<PaState>) -> Response {
    let now = (s.clock)();
    let challenge = s.lock().challenge(now, &mut OsRng);
    text(
        StatusCode::OK,
        Fields::new(JOIN_CHALLENGE).put_bytes("challenge", &challenge).encode(),
    )
}

async fn join(State(s): State<PaState>, body: axum::body::Bytes) -> Response {
    let parsed = Fields::decode(&body).and_then(|f| {
        if f.kind != JOIN {
            return Err(cacti_core::client::wire::WireError::UnknownType(f.kind));
        }
        Ok((f.bytes("report")?, f.bytes("request")?))
    });
    let (report, request) = match parsed {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.code(), e),
    };
    let Ok(report) = AttestationReport::from_bytes(&report) else {
        return error(StatusCode::BAD_REQUEST, "MALFORMED_MESSAGE", "attestation report");
    };
    let now = (s.clock)();
    // Issuance is serialised by the lock, so the per-platform limit holds
    // under concurrent joins.
    let result = s.lock().handle_join(&report, &JoinRequest(request), now, &mut OsRng);
    match result {
        Ok(resp) => text(
            StatusCode::OK,
            Fields::new(JOIN_RESPONSE).put_bytes("response", &resp.to_bytes()).encode(),
        ),
        Err(e) => error(StatusCode::FORBIDDEN, e.code(), &e),
    }
}

async fn gpk(State(s): State<PaState>) -> Response {
    let bytes = s.lock().gpk().to_bytes();
    text(StatusCode::OK, Fields::new(GPK).put_bytes("gpk", &bytes).encode())
}

async fn revocation_list(State(s): State<PaState>) -> Response {
    let bytes = s.lock().revocation_list().to_bytes();
    text(
        StatusCode::OK,
        Fields::new(REVOCATION_LIST).put_bytes("list", &bytes).encode(),
    )
}

#[derive(Clone)]
pub struct VerifierState {
    pub verifier: Arc<Verifier>,
    pub clock: Clock,
}

impl VerifierState {
    pub fn new(verifier: Verifier, clock: Clock) -> Self {
        Self {
            verifier: Arc::new(verifier),
            clock,
        }
    }
}

/// `GET /challenge` and `POST /proof`.
pub fn verifier_router(state: VerifierState) -> Router {
    Router::new()
        .route("/challenge", get(challenge))
        .route("/proof", post(proof))
        .with_state(state)
}

async fn challenge(State(s): State<VerifierState>) -> Response {
    let request = s.verifier.make_request((s.clock)(), &mut OsRng);
    let msg = Message::VisitRequest {
        request,
        reply_url: "/proof".into(),
    };
    text(StatusCode::OK, msg.encode())
}

async fn proof(State(s): State<VerifierState>, body: axum::body::Bytes) -> Response {
    let decision = match Message::decode(&body) {
        Ok(Message::VisitResponse(Ok(proof))) => s.verifier.verify_submission(&proof, (s.clock)()),
        _ => {
            let d = s.verifier.malformed();
            return text(StatusCode::BAD_REQUEST, d.to_fields().encode());
        }
    };
    let status = match decision {
        VerifyDecision::CaptchaPass => StatusCode::OK,
        VerifyDecision::ShowCaptcha(Reason::Malformed) => StatusCode::BAD_REQUEST,
        VerifyDecision::ShowCaptcha(_) => StatusCode::FORBIDDEN,
    };
    text(status, decision.to_fields().encode())
}

/// A router served on a background thread with its own runtime. Dropping
/// the handle shuts the server down.
pub struct Running {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl Running {
    pub fn spawn(router: Router) -> std::io::Result<Self> {
        Self::spawn_on("127.0.0.1:0".parse().expect("valid address"), router)
    }

    pub fn spawn_on(addr: SocketAddr, router: Router) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = thread::spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        tracing::error!("cannot serve: {e}");
                        return;
                    }
                };
                let served = axum::serve(listener, router)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
                if let Err(e) = served {
                    tracing::error!("server stopped: {e}");
                }
            });
        });
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    /// Serves until the process is killed.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
