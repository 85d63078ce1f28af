//! HTTP endpoints for the provisioning authority and the verifier.
//!
//! Bodies use the client wire schema (`key=value` lines, `type=` first,
//! base64 for binary fields). [`client`] is a tiny HTTP/1.1 client that
//! reports the exact number of bytes it put on and took off the socket.

pub mod client;
pub mod flows;
pub mod server;

pub use client::{Exchange, HttpClient, HttpError};
pub use flows::{FlowError, Visit, VisitOutcome};
pub use server::{
    pa_router, system_clock, verifier_router, Clock, PaState, Running, VerifierState,
};
