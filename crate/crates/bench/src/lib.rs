//! Measurement and adversarial harnesses.
//!
//! [`phases`] times the host's init / pre-enclave / in-enclave /
//! post-enclave phases; [`bandwidth`] counts the bytes of one HTTP exchange;
//! [`attacks`], [`oracle`] and [`scenario`] are the randomized checks the
//! acceptance suite runs at full size.

pub mod attacks;
pub mod bandwidth;
pub mod deploy;
pub mod lab;
pub mod oracle;
pub mod phases;
pub mod report;
pub mod scenario;

pub use deploy::Deployment;
pub use lab::Lab;
