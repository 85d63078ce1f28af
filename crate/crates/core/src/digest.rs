//! SHA-256 helpers shared by the hash chain, the Merkle tree and the protocol
//! encodings.

use std::cell::Cell;
use std::fmt;

use sha2::{Digest as _, Sha256};

/// A SHA-256 output.
pub type Digest = [u8; 32];

/// All-zero digest, used as the head of an empty chain and the root of an
/// empty tree.
pub const ZERO_DIGEST: Digest = [0u8; 32];

thread_local! {
    static HASH_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Hashes the concatenation of `parts`. Every call counts as one hash
/// invocation for [`hash_invocations`].
pub fn sha256(parts: &[&[u8]]) -> Digest {
    HASH_CALLS.with(|c| c.set(c.get() + 1));
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// Number of [`sha256`] invocations made on the current thread so far.
pub fn hash_invocations() -> u64 {
    HASH_CALLS.with(Cell::get)
}

/// Lowercase hex wrapper for debug and CLI output.
pub struct Hex<'a>(pub &'a [u8]);

impl fmt::Display for Hex<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Hex<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
