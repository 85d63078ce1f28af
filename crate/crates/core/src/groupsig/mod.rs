//! Group signatures: setup, join, sign, verify and open, plus
//! signature-based revocation.
//!
//! Verifiers only ever see the group public key, so a signature says "some
//! member of this group signed" and nothing about which one. The group
//! manager (the provisioning authority) can open a signature to the member
//! id it minted at join time. Keys and signatures carry a `scheme_id` so a
//! different scheme can be slotted in behind the same functions; the only
//! scheme shipped is [`SCHEME_ID`], see [`bbs`] for the construction.

pub mod bbs;

use std::fmt;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::digest::{sha256, Digest};

pub use bbs::{RevocationToken, SIGNATURE_FIELDS};

pub const SCHEME_ID: &str = "bbs+-elgamal-sigrl-v1";

/// Highest security level, in bits, the shipped scheme provides.
pub const MAX_SECURITY_BITS: u32 = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupSigError {
    #[error("unsupported group signature scheme {0:?}")]
    UnsupportedScheme(String),
    #[error("security parameter {0} exceeds what the scheme offers")]
    UnsupportedSecurityLevel(u32),
    #[error("malformed join request")]
    MalformedJoinRequest,
    #[error("tracing value already registered")]
    DuplicateMember,
    #[error("issued credential does not verify")]
    InvalidCredential,
    #[error("signature does not verify")]
    InvalidSignature,
    #[error("signature cannot be opened by this manager")]
    OpenFailed,
    #[error("signer already revoked")]
    AlreadyRevoked,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

fn check_scheme(id: &str) -> Result<(), GroupSigError> {
    if id == SCHEME_ID {
        Ok(())
    } else {
        Err(GroupSigError::UnsupportedScheme(id.to_owned()))
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GroupPublicKey {
    pub scheme_id: String,
    pub key_material: Vec<u8>,
}

impl GroupPublicKey {
    fn inner(&self) -> Result<bbs::PublicKey, GroupSigError> {
        check_scheme(&self.scheme_id)?;
        Ok(bbs::PublicKey::decode(&self.key_material)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(self.scheme_id.as_bytes()).bytes(&self.key_material);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupSigError> {
        let mut r = Reader::new(bytes);
        let gpk = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(gpk)
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self, GroupSigError> {
        let scheme_id = String::from_utf8(r.bytes()?.to_vec())
            .map_err(|_| DecodeError::Invalid("scheme id"))?;
        let key_material = r.bytes()?.to_vec();
        Ok(Self {
            scheme_id,
            key_material,
        })
    }

    /// Short identifier for logs and trust configuration.
    pub fn fingerprint(&self) -> String {
        hex::encode(&sha256(&[&self.to_bytes()])[..8])
    }
}

impl fmt::Debug for GroupPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupPublicKey({}, {})", self.scheme_id, self.fingerprint())
    }
}

/// The manager's issuing and opening secret.
#[derive(Clone)]
pub struct MasterSecret {
    bytes: Vec<u8>,
}

impl MasterSecret {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bytes.clone()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupSigError> {
        bbs::Master::decode(bytes)?;
        Ok(Self {
            bytes: bytes.to_vec(),
        })
    }

    fn inner(&self) -> bbs::Master {
        bbs::Master::decode(&self.bytes).expect("validated at construction")
    }
}

impl fmt::Debug for MasterSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MasterSecret(..)")
    }
}

/// Opaque member handle minted at join.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MemberId(pub [u8; 16]);

impl fmt::Debug for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MemberId({})", hex::encode(self.0))
    }
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Clone)]
pub struct MemberPrivateKey {
    pub gpk: GroupPublicKey,
    pub member_secret: Vec<u8>,
    pub credential: Vec<u8>,
}

impl MemberPrivateKey {
    fn inner(&self) -> Result<(bbs::PublicKey, bbs::Credential), GroupSigError> {
        let pk = self.gpk.inner()?;
        let cred = bbs::Credential::decode(&self.member_secret, &self.credential)?;
        Ok((pk, cred))
    }

    pub(crate) fn write_to(&self, w: &mut Writer) {
        w.bytes(&self.gpk.to_bytes())
            .bytes(&self.member_secret)
            .bytes(&self.credential);
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self, GroupSigError> {
        let gpk = GroupPublicKey::from_bytes(r.bytes()?)?;
        let member_secret = r.bytes()?.to_vec();
        let credential = r.bytes()?.to_vec();
        let key = Self {
            gpk,
            member_secret,
            credential,
        };
        key.inner()?;
        Ok(key)
    }
}

impl fmt::Debug for MemberPrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MemberPrivateKey({:?}, ..)", self.gpk)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct GroupSignature {
    pub scheme_id: String,
    pub payload_digest: Digest,
    pub sig_material: Vec<u8>,
    pub nonce: [u8; 16],
}

impl GroupSignature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_to(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupSigError> {
        let mut r = Reader::new(bytes);
        let sig = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(sig)
    }

    pub(crate) fn write_to(&self, w: &mut Writer) {
        w.bytes(self.scheme_id.as_bytes())
            .raw(&self.payload_digest)
            .raw(&self.nonce)
            .bytes(&self.sig_material);
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self, GroupSigError> {
        let scheme_id = String::from_utf8(r.bytes()?.to_vec())
            .map_err(|_| DecodeError::Invalid("scheme id"))?;
        let payload_digest = r.array()?;
        let nonce = r.array()?;
        let sig_material = r.bytes()?.to_vec();
        Ok(Self {
            scheme_id,
            payload_digest,
            sig_material,
            nonce,
        })
    }

    fn core(&self) -> Result<bbs::CoreSignature, GroupSigError> {
        check_scheme(&self.scheme_id)?;
        Ok(bbs::CoreSignature::decode(&self.sig_material)?)
    }
}

impl fmt::Debug for GroupSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupSignature")
            .field("scheme_id", &self.scheme_id)
            .field("payload_digest", &hex::encode(self.payload_digest))
            .field("len", &self.sig_material.len())
            .finish()
    }
}

/// Append-only list of revoked signature tokens. Signers prove they are not
/// behind any listed token; a signature made against an older, shorter list
/// no longer verifies once the list grows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RevocationList {
    pub entries: Vec<RevocationToken>,
}

impl RevocationList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.entries.len() as u32);
        for e in &self.entries {
            w.raw(&e.b).raw(&e.k);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupSigError> {
        let mut r = Reader::new(bytes);
        let n = r.u32()? as usize;
        let mut entries = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            entries.push(RevocationToken {
                b: r.array()?,
                k: r.array()?,
            });
        }
        r.finish()?;
        Ok(Self { entries })
    }
}

/// Member-side state held between [`begin_join`] and [`JoinPending::finish`].
pub struct JoinPending {
    gpk: GroupPublicKey,
    secret: bbs::JoinSecret,
}

#[derive(Clone, PartialEq, Eq)]
pub struct JoinRequest(pub Vec<u8>);

impl fmt::Debug for JoinRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JoinRequest({} bytes)", self.0.len())
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct JoinResponse {
    pub member_id: MemberId,
    pub issued: Vec<u8>,
}

impl JoinResponse {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.member_id.0).bytes(&self.issued);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupSigError> {
        let mut r = Reader::new(bytes);
        let member_id = MemberId(r.array()?);
        let issued = r.bytes()?.to_vec();
        r.finish()?;
        Ok(Self { member_id, issued })
    }
}

impl fmt::Debug for JoinResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JoinResponse({:?})", self.member_id)
    }
}

/// Starts a join: the member picks its secret and commits to it. The manager
/// learns only the commitment and `h1*f`, never `f`.
pub fn begin_join<R: RngCore + CryptoRng>(
    gpk: &GroupPublicKey,
    rng: &mut R,
) -> Result<(JoinRequest, JoinPending), GroupSigError> {
    let pk = gpk.inner()?;
    let (msg, secret) = bbs::join_request(&pk, rng);
    Ok((
        JoinRequest(msg.encode()),
        JoinPending {
            gpk: gpk.clone(),
            secret,
        },
    ))
}

impl JoinPending {
    pub fn finish(self, response: &JoinResponse) -> Result<MemberPrivateKey, GroupSigError> {
        let pk = self.gpk.inner()?;
        let issued = bbs::Issued::decode(&response.issued)?;
        let cred = bbs::Credential::complete(&pk, &self.secret, &issued)
            .ok_or(GroupSigError::InvalidCredential)?;
        Ok(MemberPrivateKey {
            gpk: self.gpk,
            member_secret: cred.secret_bytes(),
            credential: cred.credential_bytes(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberRecord {
    pub id: MemberId,
    tracing: [u8; bbs::G1_LEN],
}

/// Group manager: issues credentials and opens signatures.
#[derive(Debug, Clone)]
pub struct GroupManager {
    gpk: GroupPublicKey,
    master: MasterSecret,
    members: Vec<MemberRecord>,
}

/// Creates a fresh group.
pub fn setup<R: RngCore + CryptoRng>(
    security_bits: u32,
    rng: &mut R,
) -> Result<(GroupPublicKey, MasterSecret), GroupSigError> {
    if security_bits > MAX_SECURITY_BITS {
        return Err(GroupSigError::UnsupportedSecurityLevel(security_bits));
    }
    let (master, pk) = bbs::Master::generate(rng);
    Ok((
        GroupPublicKey {
            scheme_id: SCHEME_ID.to_owned(),
            key_material: pk.encode(),
        },
        MasterSecret {
            bytes: master.encode(),
        },
    ))
}

impl GroupManager {
    pub fn setup<R: RngCore + CryptoRng>(
        security_bits: u32,
        rng: &mut R,
    ) -> Result<Self, GroupSigError> {
        let (gpk, master) = setup(security_bits, rng)?;
        Ok(Self {
            gpk,
            master,
            members: Vec::new(),
        })
    }

    /// Rebuilds a manager from its master secret; the member registry starts
    /// empty.
    pub fn from_master(master: MasterSecret) -> Self {
        let pk = master.inner().public();
        Self {
            gpk: GroupPublicKey {
                scheme_id: SCHEME_ID.to_owned(),
                key_material: pk.encode(),
            },
            master,
            members: Vec::new(),
        }
    }

    pub fn gpk(&self) -> &GroupPublicKey {
        &self.gpk
    }

    pub fn master(&self) -> &MasterSecret {
        &self.master
    }

    pub fn members(&self) -> &[MemberRecord] {
        &self.members
    }

    /// Issues a credential for a verified join request.
    pub fn join<R: RngCore + CryptoRng>(
        &mut self,
        request: &JoinRequest,
        rng: &mut R,
    ) -> Result<JoinResponse, GroupSigError> {
        let pk = self.gpk.inner()?;
        let msg =
            bbs::JoinMessage::decode(&request.0).map_err(|_| GroupSigError::MalformedJoinRequest)?;
        if !bbs::verify_join_request(&pk, &msg) {
            return Err(GroupSigError::MalformedJoinRequest);
        }
        let tracing = msg.tracing_bytes();
        if self.members.iter().any(|m| m.tracing == tracing) {
            return Err(GroupSigError::DuplicateMember);
        }
        let issued = bbs::issue(&self.master.inner(), &msg, rng);
        let mut id = [0u8; 16];
        rng.fill_bytes(&mut id);
        let member_id = MemberId(id);
        self.members.push(MemberRecord {
            id: member_id,
            tracing,
        });
        Ok(JoinResponse {
            member_id,
            issued: issued.encode(),
        })
    }

    /// Identifies the signer of a valid signature.
    pub fn open(&self, message: &[u8], sig: &GroupSignature) -> Result<MemberId, GroupSigError> {
        open(&self.master, &self.members, &self.gpk, message, sig)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.master.bytes).u32(self.members.len() as u32);
        for m in &self.members {
            w.raw(&m.id.0).raw(&m.tracing);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupSigError> {
        let mut r = Reader::new(bytes);
        let master = MasterSecret::from_bytes(r.bytes()?)?;
        let mut manager = Self::from_master(master);
        let n = r.u32()?;
        for _ in 0..n {
            manager.members.push(MemberRecord {
                id: MemberId(r.array()?),
                tracing: r.array()?,
            });
        }
        r.finish()?;
        Ok(manager)
    }
}

/// Opens `sig` with `master`, looking the recovered tracing value up in the
/// manager's member registry.
pub fn open(
    master: &MasterSecret,
    members: &[MemberRecord],
    gpk: &GroupPublicKey,
    message: &[u8],
    sig: &GroupSignature,
) -> Result<MemberId, GroupSigError> {
    let pk = gpk.inner()?;
    let core = sig.core().map_err(|_| GroupSigError::OpenFailed)?;
    if sha256(&[message]) != sig.payload_digest
        || !core.verify_core(&pk, &sig.payload_digest, &sig.nonce)
    {
        return Err(GroupSigError::OpenFailed);
    }
    let m = master.inner();
    if m.public() != pk {
        return Err(GroupSigError::OpenFailed);
    }
    let tracing = m.decrypt_tracing(&core);
    members
        .iter()
        .find(|r| r.tracing == tracing)
        .map(|r| r.id)
        .ok_or(GroupSigError::OpenFailed)
}

pub fn sign<R: RngCore + CryptoRng>(
    key: &MemberPrivateKey,
    message: &[u8],
    revoked: &RevocationList,
    rng: &mut R,
) -> Result<GroupSignature, GroupSigError> {
    let (pk, cred) = key.inner()?;
    let payload_digest = sha256(&[message]);
    let mut nonce = [0u8; 16];
    rng.fill_bytes(&mut nonce);
    let core = bbs::sign(&pk, &cred, &payload_digest, &nonce, &revoked.entries, rng);
    Ok(GroupSignature {
        scheme_id: key.gpk.scheme_id.clone(),
        payload_digest,
        sig_material: core.encode(),
        nonce,
    })
}

/// True iff `sig` is a valid signature on `message` under `gpk` by a member
/// not behind any token in `revoked`.
pub fn verify(
    gpk: &GroupPublicKey,
    message: &[u8],
    sig: &GroupSignature,
    revoked: &RevocationList,
) -> bool {
    if sha256(&[message]) != sig.payload_digest {
        return false;
    }
    verify_digest(gpk, sig, revoked)
}

/// Like [`verify`] when only `SHA256(message)` is at hand, as carried in
/// `sig.payload_digest`.
pub fn verify_digest(gpk: &GroupPublicKey, sig: &GroupSignature, revoked: &RevocationList) -> bool {
    if gpk.scheme_id != sig.scheme_id {
        return false;
    }
    let (Ok(pk), Ok(core)) = (gpk.inner(), sig.core()) else {
        return false;
    };
    core.verify(&pk, &sig.payload_digest, &sig.nonce, &revoked.entries)
}

/// Adds the token of `sig` to the list: every signature its signer makes from
/// now on fails [`verify`] against the returned list.
pub fn revoke_by_signature(
    revoked: &RevocationList,
    gpk: &GroupPublicKey,
    sig: &GroupSignature,
) -> Result<RevocationList, GroupSigError> {
    let pk = gpk.inner()?;
    let core = sig.core().map_err(|_| GroupSigError::InvalidSignature)?;
    if !core.verify_core(&pk, &sig.payload_digest, &sig.nonce) {
        return Err(GroupSigError::InvalidSignature);
    }
    let token = core.token();
    if revoked.entries.contains(&token) {
        return Err(GroupSigError::AlreadyRevoked);
    }
    let mut out = revoked.clone();
    out.entries.push(token);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    fn enrol(manager: &mut GroupManager) -> (MemberId, MemberPrivateKey) {
        let (req, pending) = begin_join(manager.gpk(), &mut OsRng).unwrap();
        let resp = manager.join(&req, &mut OsRng).unwrap();
        (resp.member_id, pending.finish(&resp).unwrap())
    }

    #[test]
    fn security_parameter_bound() {
        assert!(setup(128, &mut OsRng).is_ok());
        assert_eq!(
            setup(256, &mut OsRng).unwrap_err(),
            GroupSigError::UnsupportedSecurityLevel(256)
        );
    }

    #[test]
    fn replayed_join_request_is_a_duplicate() {
        let mut gm = GroupManager::setup(128, &mut OsRng).unwrap();
        let (req, _) = begin_join(gm.gpk(), &mut OsRng).unwrap();
        gm.join(&req, &mut OsRng).unwrap();
        assert_eq!(gm.join(&req, &mut OsRng).unwrap_err(), GroupSigError::DuplicateMember);
    }

    #[test]
    fn garbage_join_request_rejected() {
        let mut gm = GroupManager::setup(128, &mut OsRng).unwrap();
        assert_eq!(
            gm.join(&JoinRequest(vec![1, 2, 3]), &mut OsRng).unwrap_err(),
            GroupSigError::MalformedJoinRequest
        );
    }

    #[test]
    fn manager_serialisation_keeps_open_working() {
        let mut gm = GroupManager::setup(128, &mut OsRng).unwrap();
        let (id, key) = enrol(&mut gm);
        let restored = GroupManager::from_bytes(&gm.to_bytes()).unwrap();
        assert_eq!(restored.gpk(), gm.gpk());
        let sig = sign(&key, b"m", &RevocationList::new(), &mut OsRng).unwrap();
        assert_eq!(restored.open(b"m", &sig).unwrap(), id);
    }

    #[test]
    fn unknown_scheme_does_not_verify() {
        let mut gm = GroupManager::setup(128, &mut OsRng).unwrap();
        let (_, key) = enrol(&mut gm);
        let mut sig = sign(&key, b"m", &RevocationList::new(), &mut OsRng).unwrap();
        sig.scheme_id = "other".into();
        assert!(!verify(gm.gpk(), b"m", &sig, &RevocationList::new()));
    }

    #[test]
    fn signature_bytes_round_trip() {
        let mut gm = GroupManager::setup(128, &mut OsRng).unwrap();
        let (_, key) = enrol(&mut gm);
        let sig = sign(&key, b"m", &RevocationList::new(), &mut OsRng).unwrap();
        let back = GroupSignature::from_bytes(&sig.to_bytes()).unwrap();
        assert_eq!(back, sig);
        assert_eq!(sig.sig_material.len(), SIGNATURE_FIELDS.last().unwrap().2 + 2);
    }
}
