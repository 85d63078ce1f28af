//! Enclave emulator.
//!
//! The emulated platform supplies a sealing key and a monotonic counter; the
//! enclave keeps the Merkle tree of list final hashes in memory and the
//! member key, root and counter in one sealed blob the host stores.

pub mod attest;
pub mod enclave;
pub mod hardware;
pub mod request;
pub mod seal;

pub use attest::{AttestationReport, ManufacturerKey, ENCLAVE_MEASUREMENT};
pub use enclave::{
    join_report_data, Enclave, Evidence, ExistingList, ListUpdate, MaintenanceOutcome,
    RateOutcome, TeeError,
};
pub use hardware::{HardwareError, Platform};
pub use request::{
    verify_server_signature, ProofResult, RateProof, RateProofRequest, ServerKey, GLOBAL_LIST,
};
pub use seal::SealedState;
