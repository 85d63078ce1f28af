//! The untrusted host application.
//!
//! It keeps lists and intermediate chain values in SQLite, assembles the
//! evidence the enclave asks for, writes the enclave's output back through a
//! write-ahead journal, applies the user's confirmation policy, and speaks a
//! length-prefixed text protocol on stdio.

pub mod evidence;
pub mod guard;
pub mod host;
pub mod journal;
pub mod store;
pub mod wire;

pub use evidence::assemble_evidence;
pub use guard::{ConfirmationPolicy, Decision, Guard, Rejection};
pub use host::{CrashPoint, Host, HostAudit, HostError, HostPaths, PhaseTimes};
pub use store::{AuditReport, Store, StoreError, StoredList};
pub use wire::{ErrorReply, Fields, Message};
