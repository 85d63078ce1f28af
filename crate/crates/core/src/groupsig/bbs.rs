//! Reference group-signature scheme over BLS12-381.
//!
//! * Membership credential: a BBS+ signature `(A, e, s)` on the member secret
//!   `f`, issued blindly from the commitment `U = h0*s1 + h1*f`, so
//!   `e(A, W + g2*e) = e(g1 + h0*s + h1*f, g2)` with `W = g2*x`.
//! * Signing: a randomised proof of knowledge of the credential
//!   (`A' = A*r1`, `Abar = A'*x`, `d = b*r1 - h0*r2`), an ElGamal encryption
//!   `(C1, C2) = (g1*rho, h1*f + Y*rho)` of the tracing value for the opener,
//!   and a revocation token `(B, K = B*f)` for a fresh random base `B`.
//! * Signature-based revocation: for each revoked token `(B_j, K_j)` the
//!   signer shows `T_j = (B_j*f - K_j)*mu != 0` without revealing `f`.
//!
//! All proofs are Schnorr-style with Fiat-Shamir challenges from SHA-512.

use std::sync::OnceLock;

use bls12_381::{
    multi_miller_loop, G1Affine, G1Projective, G2Affine, G2Prepared, G2Projective, Gt, Scalar,
};
use ff::Field;
use rand::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256, Sha512};

use crate::codec::{DecodeError, Reader, Writer};

const DOMAIN_CORE: &[u8] = b"CACTI-GS-v1/core";
const DOMAIN_NONREVOKED: &[u8] = b"CACTI-GS-v1/nonrevoked";
const DOMAIN_JOIN: &[u8] = b"CACTI-GS-v1/join";

pub(crate) const G1_LEN: usize = 48;
pub(crate) const G2_LEN: usize = 96;
pub(crate) const SCALAR_LEN: usize = 32;

struct Generators {
    h0: G1Projective,
    h1: G1Projective,
}

/// Nothing-up-my-sleeve generators by try-and-increment on SHA-256 output,
/// with the cofactor cleared.
fn hash_to_g1(tag: &[u8]) -> G1Projective {
    for counter in 0u32.. {
        let mut bytes = [0u8; G1_LEN];
        let a = Sha256::new()
            .chain_update(tag)
            .chain_update(counter.to_be_bytes())
            .chain_update([0])
            .finalize();
        let b = Sha256::new()
            .chain_update(tag)
            .chain_update(counter.to_be_bytes())
            .chain_update([1])
            .finalize();
        bytes[..32].copy_from_slice(&a);
        bytes[32..].copy_from_slice(&b[..16]);
        // compression flag set, infinity flag clear, keep the sort bit
        bytes[0] = (bytes[0] & 0x3f) | 0x80;
        let candidate: Option<G1Affine> = G1Affine::from_compressed_unchecked(&bytes).into();
        if let Some(p) = candidate {
            let p = G1Projective::from(p).clear_cofactor();
            if !bool::from(p.is_identity()) {
                return p;
            }
        }
    }
    unreachable!("try-and-increment exhausted")
}

fn generators() -> &'static Generators {
    static GENS: OnceLock<Generators> = OnceLock::new();
    GENS.get_or_init(|| Generators {
        h0: hash_to_g1(b"CACTI-GS-v1/h0"),
        h1: hash_to_g1(b"CACTI-GS-v1/h1"),
    })
}

fn g1() -> G1Projective {
    G1Projective::generator()
}

fn g2() -> G2Projective {
    G2Projective::generator()
}

fn enc_g1(p: &G1Projective) -> [u8; G1_LEN] {
    G1Affine::from(p).to_compressed()
}

fn enc_g2(p: &G2Projective) -> [u8; G2_LEN] {
    G2Affine::from(p).to_compressed()
}

fn read_g1(r: &mut Reader<'_>) -> Result<G1Projective, DecodeError> {
    let bytes: [u8; G1_LEN] = r.array()?;
    Option::<G1Affine>::from(G1Affine::from_compressed(&bytes))
        .map(G1Projective::from)
        .ok_or(DecodeError::Invalid("G1 point"))
}

fn read_g2(r: &mut Reader<'_>) -> Result<G2Projective, DecodeError> {
    let bytes: [u8; G2_LEN] = r.array()?;
    Option::<G2Affine>::from(G2Affine::from_compressed(&bytes))
        .map(G2Projective::from)
        .ok_or(DecodeError::Invalid("G2 point"))
}

fn read_scalar(r: &mut Reader<'_>) -> Result<Scalar, DecodeError> {
    let bytes: [u8; SCALAR_LEN] = r.array()?;
    Option::<Scalar>::from(Scalar::from_bytes(&bytes)).ok_or(DecodeError::Invalid("scalar"))
}

fn nonzero_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    loop {
        let s = Scalar::random(&mut *rng);
        if !bool::from(s.is_zero()) {
            return s;
        }
    }
}

/// Fiat-Shamir transcript.
struct Transcript(Sha512);

impl Transcript {
    fn new(domain: &[u8]) -> Self {
        let mut h = Sha512::new();
        h.update((domain.len() as u32).to_be_bytes());
        h.update(domain);
        Self(h)
    }

    fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update((b.len() as u32).to_be_bytes());
        self.0.update(b);
        self
    }

    fn point(&mut self, p: &G1Projective) -> &mut Self {
        self.0.update(enc_g1(p));
        self
    }

    fn scalar(&mut self, s: &Scalar) -> &mut Self {
        self.0.update(s.to_bytes());
        self
    }

    fn challenge(self) -> Scalar {
        let out: [u8; 64] = self.0.finalize().into();
        Scalar::from_bytes_wide(&out)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub(crate) struct PublicKey {
    pub w: G2Projective,
    pub y: G1Projective,
}

impl PublicKey {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&enc_g2(&self.w)).raw(&enc_g1(&self.y));
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let w = read_g2(&mut r)?;
        let y = read_g1(&mut r)?;
        r.finish()?;
        if bool::from(w.is_identity()) || bool::from(y.is_identity()) {
            return Err(DecodeError::Invalid("group public key"));
        }
        Ok(Self { w, y })
    }
}

#[derive(Clone)]
pub(crate) struct Master {
    pub x: Scalar,
    pub y: Scalar,
}

impl Master {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> (Self, PublicKey) {
        let x = nonzero_scalar(rng);
        let y = nonzero_scalar(rng);
        let pk = PublicKey {
            w: g2() * x,
            y: g1() * y,
        };
        (Self { x, y }, pk)
    }

    pub fn public(&self) -> PublicKey {
        PublicKey {
            w: g2() * self.x,
            y: g1() * self.y,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.x.to_bytes()).raw(&self.y.to_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let x = read_scalar(&mut r)?;
        let y = read_scalar(&mut r)?;
        r.finish()?;
        Ok(Self { x, y })
    }

    /// Recovers the tracing value `h1*f` from a signature's ciphertext.
    pub fn decrypt_tracing(&self, sig: &CoreSignature) -> [u8; G1_LEN] {
        enc_g1(&(sig.c2 - sig.c1 * self.y))
    }
}

/// Member secret kept between the two join messages.
pub(crate) struct JoinSecret {
    pub f: Scalar,
    pub s1: Scalar,
}

pub(crate) struct JoinMessage {
    pub u: G1Projective,
    /// Tracing value `h1*f`; recorded by the issuer for opening.
    pub tracing: G1Projective,
    c: Scalar,
    z_s: Scalar,
    z_f: Scalar,
}

impl JoinMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&enc_g1(&self.u))
            .raw(&enc_g1(&self.tracing))
            .raw(&self.c.to_bytes())
            .raw(&self.z_s.to_bytes())
            .raw(&self.z_f.to_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let msg = Self {
            u: read_g1(&mut r)?,
            tracing: read_g1(&mut r)?,
            c: read_scalar(&mut r)?,
            z_s: read_scalar(&mut r)?,
            z_f: read_scalar(&mut r)?,
        };
        r.finish()?;
        Ok(msg)
    }

    pub fn tracing_bytes(&self) -> [u8; G1_LEN] {
        enc_g1(&self.tracing)
    }
}

fn join_challenge(
    pk: &PublicKey,
    u: &G1Projective,
    tracing: &G1Projective,
    t1: &G1Projective,
    t2: &G1Projective,
) -> Scalar {
    let mut t = Transcript::new(DOMAIN_JOIN);
    t.bytes(&pk.encode()).point(u).point(tracing).point(t1).point(t2);
    t.challenge()
}

pub(crate) fn join_request<R: RngCore + CryptoRng>(
    pk: &PublicKey,
    rng: &mut R,
) -> (JoinMessage, JoinSecret) {
    let gens = generators();
    let f = nonzero_scalar(rng);
    let s1 = Scalar::random(&mut *rng);
    let u = gens.h0 * s1 + gens.h1 * f;
    let tracing = gens.h1 * f;
    let (r_s, r_f) = (Scalar::random(&mut *rng), Scalar::random(&mut *rng));
    let t1 = gens.h0 * r_s + gens.h1 * r_f;
    let t2 = gens.h1 * r_f;
    let c = join_challenge(pk, &u, &tracing, &t1, &t2);
    let msg = JoinMessage {
        u,
        tracing,
        c,
        z_s: r_s + c * s1,
        z_f: r_f + c * f,
    };
    (msg, JoinSecret { f, s1 })
}

/// Checks the member's proof that `U` and the tracing value share `f`.
pub(crate) fn verify_join_request(pk: &PublicKey, msg: &JoinMessage) -> bool {
    let gens = generators();
    if bool::from(msg.tracing.is_identity()) {
        return false;
    }
    let t1 = gens.h0 * msg.z_s + gens.h1 * msg.z_f - msg.u * msg.c;
    let t2 = gens.h1 * msg.z_f - msg.tracing * msg.c;
    join_challenge(pk, &msg.u, &msg.tracing, &t1, &t2) == msg.c
}

pub(crate) struct Issued {
    pub a: G1Projective,
    pub e: Scalar,
    pub s2: Scalar,
}

impl Issued {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&enc_g1(&self.a))
            .raw(&self.e.to_bytes())
            .raw(&self.s2.to_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let issued = Self {
            a: read_g1(&mut r)?,
            e: read_scalar(&mut r)?,
            s2: read_scalar(&mut r)?,
        };
        r.finish()?;
        Ok(issued)
    }
}

pub(crate) fn issue<R: RngCore + CryptoRng>(
    master: &Master,
    msg: &JoinMessage,
    rng: &mut R,
) -> Issued {
    let gens = generators();
    loop {
        let e = Scalar::random(&mut *rng);
        let s2 = Scalar::random(&mut *rng);
        let Some(inv) = Option::<Scalar>::from((master.x + e).invert()) else {
            continue;
        };
        let a = (g1() + gens.h0 * s2 + msg.u) * inv;
        return Issued { a, e, s2 };
    }
}

#[derive(Clone)]
pub(crate) struct Credential {
    pub f: Scalar,
    pub a: G1Projective,
    pub e: Scalar,
    pub s: Scalar,
}

impl Credential {
    pub fn complete(pk: &PublicKey, secret: &JoinSecret, issued: &Issued) -> Option<Self> {
        let cred = Self {
            f: secret.f,
            a: issued.a,
            e: issued.e,
            s: secret.s1 + issued.s2,
        };
        cred.is_valid(pk).then_some(cred)
    }

    fn b(&self) -> G1Projective {
        let gens = generators();
        g1() + gens.h0 * self.s + gens.h1 * self.f
    }

    /// `e(A, W + g2*e) == e(b, g2)`
    pub fn is_valid(&self, pk: &PublicKey) -> bool {
        if bool::from(self.a.is_identity()) {
            return false;
        }
        let lhs = G2Prepared::from(G2Affine::from(pk.w + g2() * self.e));
        let rhs = G2Prepared::from(G2Affine::generator());
        let a = G1Affine::from(self.a);
        let nb = G1Affine::from(-self.b());
        multi_miller_loop(&[(&a, &lhs), (&nb, &rhs)]).final_exponentiation() == Gt::identity()
    }

    pub fn secret_bytes(&self) -> Vec<u8> {
        self.f.to_bytes().to_vec()
    }

    pub fn credential_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&enc_g1(&self.a))
            .raw(&self.e.to_bytes())
            .raw(&self.s.to_bytes());
        w.finish()
    }

    pub fn decode(secret: &[u8], credential: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(secret);
        let f = read_scalar(&mut r)?;
        r.finish()?;
        let mut r = Reader::new(credential);
        let cred = Self {
            f,
            a: read_g1(&mut r)?,
            e: read_scalar(&mut r)?,
            s: read_scalar(&mut r)?,
        };
        r.finish()?;
        Ok(cred)
    }
}

/// A revoked signature's token `(B, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RevocationToken {
    pub b: [u8; G1_LEN],
    pub k: [u8; G1_LEN],
}

struct Token {
    b: G1Projective,
    k: G1Projective,
}

impl RevocationToken {
    fn decode(&self) -> Option<Token> {
        let b = Option::<G1Affine>::from(G1Affine::from_compressed(&self.b))?;
        let k = Option::<G1Affine>::from(G1Affine::from_compressed(&self.k))?;
        Some(Token {
            b: b.into(),
            k: k.into(),
        })
    }
}

struct NonRevoked {
    t: G1Projective,
    c: Scalar,
    z_alpha: Scalar,
    z_mu: Scalar,
}

pub(crate) struct CoreSignature {
    a_prime: G1Projective,
    a_bar: G1Projective,
    d: G1Projective,
    c1: G1Projective,
    c2: G1Projective,
    b: G1Projective,
    k: G1Projective,
    c: Scalar,
    z_e: Scalar,
    z_r2: Scalar,
    z_r3: Scalar,
    z_s: Scalar,
    z_f: Scalar,
    z_rho: Scalar,
    non_revoked: Vec<NonRevoked>,
}

/// Byte offsets of the fixed-size fields in the encoded signature material,
/// as `(name, start, end)`. Exposed for the linkage audits.
pub const SIGNATURE_FIELDS: &[(&str, usize, usize)] = &[
    ("a_prime", 0, 48),
    ("a_bar", 48, 96),
    ("d", 96, 144),
    ("c1", 144, 192),
    ("c2", 192, 240),
    ("b", 240, 288),
    ("k", 288, 336),
    ("c", 336, 368),
    ("z_e", 368, 400),
    ("z_r2", 400, 432),
    ("z_r3", 432, 464),
    ("z_s", 464, 496),
    ("z_f", 496, 528),
    ("z_rho", 528, 560),
];

impl CoreSignature {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        for p in [
            &self.a_prime,
            &self.a_bar,
            &self.d,
            &self.c1,
            &self.c2,
            &self.b,
            &self.k,
        ] {
            w.raw(&enc_g1(p));
        }
        for s in [
            &self.c, &self.z_e, &self.z_r2, &self.z_r3, &self.z_s, &self.z_f, &self.z_rho,
        ] {
            w.raw(&s.to_bytes());
        }
        w.u16(self.non_revoked.len() as u16);
        for nr in &self.non_revoked {
            w.raw(&enc_g1(&nr.t))
                .raw(&nr.c.to_bytes())
                .raw(&nr.z_alpha.to_bytes())
                .raw(&nr.z_mu.to_bytes());
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let mut sig = Self {
            a_prime: read_g1(&mut r)?,
            a_bar: read_g1(&mut r)?,
            d: read_g1(&mut r)?,
            c1: read_g1(&mut r)?,
            c2: read_g1(&mut r)?,
            b: read_g1(&mut r)?,
            k: read_g1(&mut r)?,
            c: read_scalar(&mut r)?,
            z_e: read_scalar(&mut r)?,
            z_r2: read_scalar(&mut r)?,
            z_r3: read_scalar(&mut r)?,
            z_s: read_scalar(&mut r)?,
            z_f: read_scalar(&mut r)?,
            z_rho: read_scalar(&mut r)?,
            non_revoked: Vec::new(),
        };
        let n = r.u16()? as usize;
        for _ in 0..n {
            sig.non_revoked.push(NonRevoked {
                t: read_g1(&mut r)?,
                c: read_scalar(&mut r)?,
                z_alpha: read_scalar(&mut r)?,
                z_mu: read_scalar(&mut r)?,
            });
        }
        r.finish()?;
        Ok(sig)
    }

    pub fn token(&self) -> RevocationToken {
        RevocationToken {
            b: enc_g1(&self.b),
            k: enc_g1(&self.k),
        }
    }

    /// Verifies the membership proof, then a non-revocation proof for every
    /// token in `revoked` (matched by position).
    pub fn verify(
        &self,
        pk: &PublicKey,
        payload: &[u8; 32],
        nonce: &[u8],
        revoked: &[RevocationToken],
    ) -> bool {
        self.verify_core(pk, payload, nonce) && self.verify_non_revoked(revoked)
    }

    pub fn verify_core(&self, pk: &PublicKey, payload: &[u8; 32], nonce: &[u8]) -> bool {
        let gens = generators();
        if bool::from(self.a_prime.is_identity()) || bool::from(self.b.is_identity()) {
            return false;
        }
        // e(A', W) == e(Abar, g2)
        let w = G2Prepared::from(G2Affine::from(pk.w));
        let gen2 = G2Prepared::from(G2Affine::generator());
        let ap = G1Affine::from(self.a_prime);
        let nab = G1Affine::from(-self.a_bar);
        if multi_miller_loop(&[(&ap, &w), (&nab, &gen2)]).final_exponentiation() != Gt::identity()
        {
            return false;
        }
        let c = self.c;
        let t1 = self.a_prime * (-self.z_e) + gens.h0 * self.z_r2 - (self.a_bar - self.d) * c;
        let t2 = self.d * self.z_r3 - gens.h0 * self.z_s - gens.h1 * self.z_f - g1() * c;
        let t3 = g1() * self.z_rho - self.c1 * c;
        let t4 = gens.h1 * self.z_f + pk.y * self.z_rho - self.c2 * c;
        let t5 = self.b * self.z_f - self.k * c;
        core_challenge(pk, self, [&t1, &t2, &t3, &t4, &t5], payload, nonce) == c
    }

    fn verify_non_revoked(&self, revoked: &[RevocationToken]) -> bool {
        // Tokens are append-only; a signature made against a longer list
        // still covers every token the verifier knows about.
        if self.non_revoked.len() < revoked.len() {
            return false;
        }
        revoked.iter().zip(&self.non_revoked).all(|(token, nr)| {
            let Some(tok) = token.decode() else {
                return false;
            };
            if bool::from(nr.t.is_identity()) {
                return false;
            }
            let r1 = tok.b * nr.z_alpha - tok.k * nr.z_mu - nr.t * nr.c;
            let r2 = self.b * nr.z_alpha - self.k * nr.z_mu;
            non_revoked_challenge(self, &tok, &nr.t, &r1, &r2) == nr.c
        })
    }
}

fn core_challenge(
    pk: &PublicKey,
    sig: &CoreSignature,
    commitments: [&G1Projective; 5],
    payload: &[u8; 32],
    nonce: &[u8],
) -> Scalar {
    let mut t = Transcript::new(DOMAIN_CORE);
    t.bytes(&pk.encode());
    for p in [
        &sig.a_prime,
        &sig.a_bar,
        &sig.d,
        &sig.c1,
        &sig.c2,
        &sig.b,
        &sig.k,
    ] {
        t.point(p);
    }
    for p in commitments {
        t.point(p);
    }
    t.bytes(payload).bytes(nonce);
    t.challenge()
}

fn non_revoked_challenge(
    sig: &CoreSignature,
    token: &Token,
    t_j: &G1Projective,
    r1: &G1Projective,
    r2: &G1Projective,
) -> Scalar {
    let mut t = Transcript::new(DOMAIN_NONREVOKED);
    t.scalar(&sig.c)
        .point(&sig.b)
        .point(&sig.k)
        .point(&token.b)
        .point(&token.k)
        .point(t_j)
        .point(r1)
        .point(r2);
    t.challenge()
}

pub(crate) fn sign<R: RngCore + CryptoRng>(
    pk: &PublicKey,
    cred: &Credential,
    payload: &[u8; 32],
    nonce: &[u8],
    revoked: &[RevocationToken],
    rng: &mut R,
) -> CoreSignature {
    let gens = generators();
    let b = cred.b();

    let r1 = nonzero_scalar(rng);
    let r2 = Scalar::random(&mut *rng);
    let r3 = r1.invert().unwrap();
    let a_prime = cred.a * r1;
    let a_bar = a_prime * (-cred.e) + b * r1;
    let d = b * r1 - gens.h0 * r2;
    let s_prime = cred.s - r2 * r3;

    let rho = Scalar::random(&mut *rng);
    let c1 = g1() * rho;
    let c2 = gens.h1 * cred.f + pk.y * rho;

    let base = g1() * nonzero_scalar(rng);
    let k = base * cred.f;

    let [re, rr2, rr3, rs, rf, rrho] = std::array::from_fn(|_| Scalar::random(&mut *rng));
    let t1 = a_prime * (-re) + gens.h0 * rr2;
    let t2 = d * rr3 - gens.h0 * rs - gens.h1 * rf;
    let t3 = g1() * rrho;
    let t4 = gens.h1 * rf + pk.y * rrho;
    let t5 = base * rf;

    let mut sig = CoreSignature {
        a_prime,
        a_bar,
        d,
        c1,
        c2,
        b: base,
        k,
        c: Scalar::zero(),
        z_e: Scalar::zero(),
        z_r2: Scalar::zero(),
        z_r3: Scalar::zero(),
        z_s: Scalar::zero(),
        z_f: Scalar::zero(),
        z_rho: Scalar::zero(),
        non_revoked: Vec::new(),
    };
    let c = core_challenge(pk, &sig, [&t1, &t2, &t3, &t4, &t5], payload, nonce);
    sig.c = c;
    sig.z_e = re + c * cred.e;
    sig.z_r2 = rr2 + c * r2;
    sig.z_r3 = rr3 + c * r3;
    sig.z_s = rs + c * s_prime;
    sig.z_f = rf + c * cred.f;
    sig.z_rho = rrho + c * rho;

    for token in revoked {
        let Some(tok) = token.decode() else {
            // An undecodable token cannot match anyone; emit a proof that
            // will fail so verification rejects the malformed list.
            sig.non_revoked.push(NonRevoked {
                t: G1Projective::identity(),
                c: Scalar::zero(),
                z_alpha: Scalar::zero(),
                z_mu: Scalar::zero(),
            });
            continue;
        };
        let mu = nonzero_scalar(rng);
        let alpha = cred.f * mu;
        let t_j = (tok.b * cred.f - tok.k) * mu;
        let (ra, rm) = (Scalar::random(&mut *rng), Scalar::random(&mut *rng));
        let r1 = tok.b * ra - tok.k * rm;
        let r2 = sig.b * ra - sig.k * rm;
        let c_j = non_revoked_challenge(&sig, &tok, &t_j, &r1, &r2);
        sig.non_revoked.push(NonRevoked {
            t: t_j,
            c: c_j,
            z_alpha: ra + c_j * alpha,
            z_mu: rm + c_j * mu,
        });
    }
    sig
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    fn member(master: &Master, pk: &PublicKey) -> Credential {
        let (msg, secret) = join_request(pk, &mut OsRng);
        assert!(verify_join_request(pk, &msg));
        let issued = issue(master, &msg, &mut OsRng);
        Credential::complete(pk, &secret, &issued).expect("credential verifies")
    }

    #[test]
    fn generators_are_distinct_and_stable() {
        let g = generators();
        assert_ne!(g.h0, g.h1);
        assert_eq!(hash_to_g1(b"CACTI-GS-v1/h0"), g.h0);
    }

    #[test]
    fn sign_verify_round_trip() {
        let (master, pk) = Master::generate(&mut OsRng);
        let cred = member(&master, &pk);
        let payload = [3u8; 32];
        let sig = sign(&pk, &cred, &payload, b"nonce", &[], &mut OsRng);
        assert!(sig.verify(&pk, &payload, b"nonce", &[]));
        assert!(!sig.verify(&pk, &[4u8; 32], b"nonce", &[]));
        assert!(!sig.verify(&pk, &payload, b"other", &[]));
        let decoded = CoreSignature::decode(&sig.encode()).unwrap();
        assert!(decoded.verify(&pk, &payload, b"nonce", &[]));
    }

    #[test]
    fn tampered_join_request_rejected() {
        let (_, pk) = Master::generate(&mut OsRng);
        let (mut msg, _) = join_request(&pk, &mut OsRng);
        msg.tracing += g1();
        assert!(!verify_join_request(&pk, &msg));
    }

    #[test]
    fn credential_from_other_issuer_is_invalid() {
        let (m1, pk1) = Master::generate(&mut OsRng);
        let (_, pk2) = Master::generate(&mut OsRng);
        let cred = member(&m1, &pk1);
        assert!(!cred.is_valid(&pk2));
    }

    #[test]
    fn opener_recovers_tracing_value() {
        let (master, pk) = Master::generate(&mut OsRng);
        let (msg, secret) = join_request(&pk, &mut OsRng);
        let issued = issue(&master, &msg, &mut OsRng);
        let cred = Credential::complete(&pk, &secret, &issued).unwrap();
        let sig = sign(&pk, &cred, &[0; 32], b"n", &[], &mut OsRng);
        assert_eq!(master.decrypt_tracing(&sig), msg.tracing_bytes());
    }

    #[test]
    fn non_revocation_proofs() {
        let (master, pk) = Master::generate(&mut OsRng);
        let alice = member(&master, &pk);
        let bob = member(&master, &pk);
        let revoked = vec![sign(&pk, &alice, &[0; 32], b"n", &[], &mut OsRng).token()];
        let by_alice = sign(&pk, &alice, &[1; 32], b"n", &revoked, &mut OsRng);
        let by_bob = sign(&pk, &bob, &[1; 32], b"n", &revoked, &mut OsRng);
        assert!(by_alice.verify_core(&pk, &[1; 32], b"n"));
        assert!(!by_alice.verify(&pk, &[1; 32], b"n", &revoked));
        assert!(by_bob.verify(&pk, &[1; 32], b"n", &revoked));
    }
}
