//! Rate-proofs from an emulated client-side TEE.
//!
//! A client keeps named lists of timestamps outside its enclave, protected by
//! per-list hash chains and a Merkle tree whose root is sealed next to a
//! group-signature member key and a monotonic counter value. A server asks
//! for proof that a list has at most `k` timestamps since `t_s`; the enclave
//! checks the presented evidence, appends the server's timestamp and signs the
//! answer with its group key, so the server learns only "below threshold".

pub mod client;
pub mod codec;
pub mod digest;
pub mod groupsig;
pub mod hashchain;
pub mod mht;
pub mod services;
pub mod tee;

pub use digest::Digest;
pub use hashchain::{ListInfo, Timestamp};
