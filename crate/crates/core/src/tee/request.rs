//! Rate-proof requests and the proofs the enclave returns.

use p256::ecdsa::signature::{Signer, Verifier};
use p256::ecdsa::{Signature, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};

use crate::codec::{DecodeError, Reader, Writer};
use crate::digest::{sha256, Digest};
use crate::groupsig::{self, GroupPublicKey, GroupSignature, RevocationList};
use crate::hashchain::Timestamp;

/// Well-known name of the list shared by every participating server.
pub const GLOBAL_LIST: &str = "CACTI-GLOBAL";

/// Version byte of the message a rate-proof signature covers.
pub const PROOF_VERSION: u8 = 1;

/// A server's challenge: "at most `k` timestamps since `t_s`, then add `t`".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateProofRequest {
    pub t: Timestamp,
    pub t_s: Timestamp,
    pub k: u64,
    pub list_name: String,
    /// SEC1-compressed P-256 key of a server that owns the list.
    pub server_pk: Option<Vec<u8>>,
    /// ECDSA signature over [`RateProofRequest::canonical_bytes`].
    pub server_sig: Option<Vec<u8>>,
    pub prune_point: Option<Timestamp>,
    pub nonce: [u8; 16],
}

impl RateProofRequest {
    /// `BE4(t) || BE4(t_s) || BE8(k) || BE4(len name) || name ||
    ///  pk_flag || pk? || tP_flag || BE4(t_P)? || nonce`
    ///
    /// The server signature is not part of the encoding.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.i32(self.t.0)
            .i32(self.t_s.0)
            .u64(self.k)
            .u32(self.list_name.len() as u32)
            .raw(self.list_name.as_bytes());
        match &self.server_pk {
            Some(pk) => w.u8(1).raw(pk),
            None => w.u8(0),
        };
        match self.prune_point {
            Some(tp) => w.u8(1).i32(tp.0),
            None => w.u8(0),
        };
        w.raw(&self.nonce);
        w.finish()
    }

    pub fn digest(&self) -> Digest {
        sha256(&[&self.canonical_bytes()])
    }

    /// Sets `server_pk` and signs the request with `key`.
    pub fn sign_with(&mut self, key: &ServerKey) {
        self.server_pk = Some(key.public_bytes());
        self.server_sig = Some(key.sign(&self.canonical_bytes()));
    }

    /// True iff both `server_pk` and `server_sig` are present and the
    /// signature verifies.
    pub fn server_signature_valid(&self) -> bool {
        match (&self.server_pk, &self.server_sig) {
            (Some(pk), Some(sig)) => verify_server_signature(pk, &self.canonical_bytes(), sig),
            _ => false,
        }
    }
}

/// A server's ECDSA P-256 request-signing key.
#[derive(Clone)]
pub struct ServerKey(SigningKey);

impl ServerKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self(SigningKey::random(rng))
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        SigningKey::from_slice(bytes).ok().map(Self)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes().to_vec()
    }

    pub fn public_bytes(&self) -> Vec<u8> {
        VerifyingKey::from(&self.0)
            .to_encoded_point(true)
            .as_bytes()
            .to_vec()
    }

    pub fn sign(&self, msg: &[u8]) -> Vec<u8> {
        let sig: Signature = self.0.sign(msg);
        sig.to_bytes().to_vec()
    }
}

impl std::fmt::Debug for ServerKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ServerKey({})", hex::encode(self.public_bytes()))
    }
}

pub fn verify_server_signature(pk: &[u8], msg: &[u8], sig: &[u8]) -> bool {
    let Ok(vk) = VerifyingKey::from_sec1_bytes(pk) else {
        return false;
    };
    let Ok(sig) = Signature::from_slice(sig) else {
        return false;
    };
    vk.verify(msg, &sig).is_ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProofResult {
    Pass,
}

impl ProofResult {
    fn code(self) -> u8 {
        match self {
            ProofResult::Pass => 1,
        }
    }
}

/// Group-signed statement that the request with `request_digest` was checked
/// and its timestamp added. Carries no counts and no list contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateProof {
    pub request_digest: Digest,
    pub result: ProofResult,
    pub signature: GroupSignature,
}

impl RateProof {
    /// `version || request_digest || result`
    pub fn signed_message(request_digest: &Digest, result: ProofResult) -> Vec<u8> {
        let mut msg = Vec::with_capacity(34);
        msg.push(PROOF_VERSION);
        msg.extend_from_slice(request_digest);
        msg.push(result.code());
        msg
    }

    pub fn verify(&self, gpk: &GroupPublicKey, revoked: &RevocationList) -> bool {
        groupsig::verify(
            gpk,
            &Self::signed_message(&self.request_digest, self.result),
            &self.signature,
            revoked,
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.request_digest).u8(self.result.code());
        self.signature.write_to(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let request_digest = r.array()?;
        let result = match r.u8()? {
            1 => ProofResult::Pass,
            _ => return Err(DecodeError::Invalid("proof result")),
        };
        let signature =
            GroupSignature::read_from(&mut r).map_err(|_| DecodeError::Invalid("signature"))?;
        r.finish()?;
        Ok(Self {
            request_digest,
            result,
            signature,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    fn request() -> RateProofRequest {
        RateProofRequest {
            t: Timestamp(400),
            t_s: Timestamp(150),
            k: 2,
            list_name: "example.com".into(),
            server_pk: None,
            server_sig: None,
            prune_point: None,
            nonce: [7; 16],
        }
    }

    #[test]
    fn canonical_layout() {
        let mut req = request();
        req.list_name = "a".into();
        req.prune_point = Some(Timestamp(1));
        let mut expected = vec![0, 0, 1, 144, 0, 0, 0, 150, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 1, b'a'];
        expected.extend([0, 1, 0, 0, 0, 1]);
        expected.extend([7; 16]);
        assert_eq!(req.canonical_bytes(), expected);
    }

    #[test]
    fn server_signature_covers_every_field() {
        let key = ServerKey::generate(&mut OsRng);
        let mut req = request();
        req.sign_with(&key);
        assert!(req.server_signature_valid());
        assert_eq!(req.server_pk.as_ref().unwrap().len(), 33);
        let mut altered = req.clone();
        altered.k = 3;
        assert!(!altered.server_signature_valid());
        let mut altered = req.clone();
        altered.nonce[0] ^= 1;
        assert!(!altered.server_signature_valid());
    }

    #[test]
    fn unsigned_request_has_no_valid_signature() {
        assert!(!request().server_signature_valid());
    }

    #[test]
    fn server_key_bytes_round_trip() {
        let key = ServerKey::generate(&mut OsRng);
        let back = ServerKey::from_bytes(&key.to_bytes()).unwrap();
        assert_eq!(back.public_bytes(), key.public_bytes());
    }
}
