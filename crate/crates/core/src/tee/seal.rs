//! Sealed enclave state: `"CSEAL1" || nonce(12) || ciphertext || tag(16)`,
//! AES-256-GCM under the platform sealing key with the magic as associated
//! data.
//!
//! The plaintext holds the Merkle root, the counter value and the member key
//! together, so none of them can be swapped or deleted on its own.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use rand::{CryptoRng, RngCore};

use crate::codec::{Reader, Writer};
use crate::digest::Digest;
use crate::groupsig::MemberPrivateKey;

pub const SEAL_MAGIC: &[u8; 6] = b"CSEAL1";
const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;
const PLAINTEXT_VERSION: u8 = 1;

/// An opaque sealed blob, safe to hand to the untrusted host.
#[derive(Clone, PartialEq, Eq)]
pub struct SealedState(Vec<u8>);

impl SealedState {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl std::fmt::Debug for SealedState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SealedState({} bytes)", self.0.len())
    }
}

/// What the enclave keeps across sessions.
#[derive(Clone, Debug)]
pub(crate) struct Contents {
    pub mht_root: Digest,
    pub counter: u64,
    pub member_key: MemberPrivateKey,
}

pub(crate) fn seal<R: RngCore + CryptoRng>(
    key: &[u8; 32],
    contents: &Contents,
    rng: &mut R,
) -> SealedState {
    let mut w = Writer::new();
    w.u8(PLAINTEXT_VERSION)
        .raw(&contents.mht_root)
        .u64(contents.counter);
    contents.member_key.write_to(&mut w);
    let plaintext = w.finish();

    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let cipher = Aes256Gcm::new(key.into());
    let ct = cipher
        .encrypt(
            &Nonce::from(nonce),
            Payload {
                msg: &plaintext,
                aad: SEAL_MAGIC,
            },
        )
        .expect("AES-GCM encryption of a bounded buffer cannot fail");

    let mut out = Vec::with_capacity(SEAL_MAGIC.len() + NONCE_LEN + ct.len());
    out.extend_from_slice(SEAL_MAGIC);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    SealedState(out)
}

/// Returns `None` for anything that is not an authentic blob for `key`.
pub(crate) fn unseal(key: &[u8; 32], sealed: &SealedState) -> Option<Contents> {
    let bytes = sealed.as_bytes();
    let body = bytes.strip_prefix(SEAL_MAGIC.as_slice())?;
    if body.len() < NONCE_LEN + TAG_LEN {
        return None;
    }
    let (nonce, ct) = body.split_at(NONCE_LEN);
    let nonce: [u8; NONCE_LEN] = nonce.try_into().ok()?;
    let plaintext = Aes256Gcm::new(key.into())
        .decrypt(
            &Nonce::from(nonce),
            Payload {
                msg: ct,
                aad: SEAL_MAGIC,
            },
        )
        .ok()?;

    let mut r = Reader::new(&plaintext);
    if r.u8().ok()? != PLAINTEXT_VERSION {
        return None;
    }
    let mht_root = r.array().ok()?;
    let counter = r.u64().ok()?;
    let member_key = MemberPrivateKey::read_from(&mut r).ok()?;
    r.finish().ok()?;
    Some(Contents {
        mht_root,
        counter,
        member_key,
    })
}
