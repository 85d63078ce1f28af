//! Provisioning authority and verifier services.

pub mod pa;
pub mod verifier;

pub use pa::{IssuanceRecord, PaError, ProvisioningAuthority};
pub use verifier::{
    Artifact, Reason, ThresholdPolicy, TrustedPa, Verifier, VerifierConfig, VerifyDecision,
};
