//! Emulated remote attestation.
//!
//! A report is an HMAC-SHA256, under a manufacturer key the provisioning
//! authority also holds, over the enclave measurement, the verifier's
//! challenge, the platform id and 32 bytes of enclave-chosen report data.
//! Real quote verification is replaced by this shared-key MAC.

use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};

use crate::codec::{DecodeError, Reader, Writer};
use crate::digest::Digest;

type HmacSha256 = Hmac<Sha256>;

/// Identity of the enclave code every genuine emulator reports.
pub const ENCLAVE_MEASUREMENT: [u8; 32] = *b"cacti enclave emulator v1.0.0\0\0\0";

/// Key the emulated manufacturer burns into every platform it ships.
#[derive(Clone, PartialEq, Eq)]
pub struct ManufacturerKey(pub [u8; 32]);

impl ManufacturerKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        Self(k)
    }

    /// Fixed key shared by the command-line tools so a local provisioning
    /// authority and client agree out of the box.
    pub fn development() -> Self {
        Self(Sha256::digest(b"cacti development manufacturer key").into())
    }

    fn mac(&self) -> HmacSha256 {
        HmacSha256::new_from_slice(&self.0).expect("HMAC accepts any key length")
    }
}

impl std::fmt::Debug for ManufacturerKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ManufacturerKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttestationReport {
    pub measurement: [u8; 32],
    pub platform_id: [u8; 32],
    pub report_data: Digest,
    pub challenge: Vec<u8>,
    pub mac: [u8; 32],
}

impl AttestationReport {
    pub(crate) fn create(
        key: &ManufacturerKey,
        platform_id: [u8; 32],
        challenge: &[u8],
        report_data: Digest,
    ) -> Self {
        let mut report = Self {
            measurement: ENCLAVE_MEASUREMENT,
            platform_id,
            report_data,
            challenge: challenge.to_vec(),
            mac: [0; 32],
        };
        let mut mac = key.mac();
        mac.update(&report.signed_bytes());
        report.mac = mac.finalize().into_bytes().into();
        report
    }

    fn signed_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.measurement)
            .bytes(&self.challenge)
            .raw(&self.platform_id)
            .raw(&self.report_data);
        w.finish()
    }

    /// Checks the MAC and that the measurement is the genuine enclave's.
    /// Challenge freshness is the verifier's business.
    pub fn verify(&self, key: &ManufacturerKey) -> bool {
        let mut mac = key.mac();
        mac.update(&self.signed_bytes());
        mac.verify_slice(&self.mac).is_ok() && self.measurement == ENCLAVE_MEASUREMENT
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.signed_bytes()).raw(&self.mac);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let measurement = r.array()?;
        let challenge = r.bytes()?.to_vec();
        let platform_id = r.array()?;
        let report_data = r.array()?;
        let mac = r.array()?;
        r.finish()?;
        Ok(Self {
            measurement,
            platform_id,
            report_data,
            challenge,
            mac,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    #[test]
    fn round_trip_and_wrong_key() {
        let key = ManufacturerKey::generate(&mut OsRng);
        let report = AttestationReport::create(&key, [1; 32], b"challenge", [2; 32]);
        let back = AttestationReport::from_bytes(&report.to_bytes()).unwrap();
        assert!(back.verify(&key));
        assert!(!back.verify(&ManufacturerKey::generate(&mut OsRng)));
    }

    #[test]
    fn any_field_change_breaks_the_mac() {
        let key = ManufacturerKey::generate(&mut OsRng);
        let report = AttestationReport::create(&key, [1; 32], b"challenge", [2; 32]);
        let bytes = report.to_bytes();
        for i in 0..bytes.len() {
            let mut tampered = bytes.clone();
            tampered[i] ^= 0x01;
            if let Ok(r) = AttestationReport::from_bytes(&tampered) {
                assert!(!r.verify(&key), "byte {i}");
            }
        }
    }
}
