//! Provisioning authority: checks an enclave's attestation, then runs the
//! group join and hands the member key material to the enclave.

use std::collections::HashMap;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::groupsig::{
    GroupManager, GroupPublicKey, GroupSigError, GroupSignature, JoinRequest, JoinResponse,
    MemberId, RevocationList,
};
use crate::hashchain::Timestamp;
use crate::tee::{join_report_data, AttestationReport, ManufacturerKey};

pub const DEFAULT_CHALLENGE_TTL_SECS: i64 = 300;
pub const DEFAULT_REPROVISION_PERIOD_SECS: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PaError {
    #[error("attestation does not verify")]
    AttestationFailed,
    #[error("challenge unknown, expired or already used")]
    StaleChallenge,
    #[error("platform was provisioned too recently")]
    ReprovisionLimited,
    #[error(transparent)]
    Join(#[from] GroupSigError),
}

impl PaError {
    pub fn code(&self) -> &'static str {
        match self {
            PaError::AttestationFailed => "ATTESTATION_FAILED",
            PaError::StaleChallenge => "STALE_CHALLENGE",
            PaError::ReprovisionLimited => "REPROVISION_LIMITED",
            PaError::Join(_) => "JOIN_FAILED",
        }
    }
}

/// One issuance, without any member secret.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuanceRecord {
    pub platform_id: [u8; 32],
    pub member_id: MemberId,
    pub at: Timestamp,
}

pub struct ProvisioningAuthority {
    pub name: String,
    manager: GroupManager,
    manufacturer: ManufacturerKey,
    challenges: HashMap<Vec<u8>, Timestamp>,
    log: Vec<IssuanceRecord>,
    revoked: RevocationList,
    pub challenge_ttl_secs: i64,
    /// At most one issuance per platform within this many seconds.
    pub reprovision_period_secs: i64,
}

impl ProvisioningAuthority {
    pub fn new<R: RngCore + CryptoRng>(
        name: impl Into<String>,
        manufacturer: ManufacturerKey,
        rng: &mut R,
    ) -> Result<Self, PaError> {
        Ok(Self::from_manager(
            name,
            manufacturer,
            GroupManager::setup(128, rng)?,
        ))
    }

    pub fn from_manager(name: impl Into<String>, manufacturer: ManufacturerKey, manager: GroupManager) -> Self {
        Self {
            name: name.into(),
            manager,
            manufacturer,
            challenges: HashMap::new(),
            log: Vec::new(),
            revoked: RevocationList::new(),
            challenge_ttl_secs: DEFAULT_CHALLENGE_TTL_SECS,
            reprovision_period_secs: DEFAULT_REPROVISION_PERIOD_SECS,
        }
    }

    pub fn gpk(&self) -> &GroupPublicKey {
        self.manager.gpk()
    }

    pub fn manager(&self) -> &GroupManager {
        &self.manager
    }

    pub fn revocation_list(&self) -> &RevocationList {
        &self.revoked
    }

    pub fn issuance_log(&self) -> &[IssuanceRecord] {
        &self.log
    }

    /// A fresh attestation challenge, valid once within the TTL.
    pub fn challenge<R: RngCore + CryptoRng>(&mut self, now: Timestamp, rng: &mut R) -> Vec<u8> {
        let ttl = self.challenge_ttl_secs;
        self.challenges
            .retain(|_, issued| issued.saturating_add(ttl) >= now);
        let mut c = vec![0u8; 32];
        rng.fill_bytes(&mut c);
        self.challenges.insert(c.clone(), now);
        c
    }

    /// Verifies the attestation for `request`, then issues a credential.
    pub fn handle_join<R: RngCore + CryptoRng>(
        &mut self,
        report: &AttestationReport,
        request: &JoinRequest,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<JoinResponse, PaError> {
        if !report.verify(&self.manufacturer) || report.report_data != join_report_data(request) {
            return Err(PaError::AttestationFailed);
        }
        match self.challenges.get(&report.challenge) {
            Some(issued) if issued.saturating_add(self.challenge_ttl_secs) >= now => {}
            _ => return Err(PaError::StaleChallenge),
        }
        let horizon = now.saturating_add(-self.reprovision_period_secs);
        if self
            .log
            .iter()
            .any(|r| r.platform_id == report.platform_id && r.at > horizon)
        {
            return Err(PaError::ReprovisionLimited);
        }
        // The challenge is spent whatever the join outcome.
        self.challenges.remove(&report.challenge);
        let response = self.manager.join(request, rng)?;
        self.log.push(IssuanceRecord {
            platform_id: report.platform_id,
            member_id: response.member_id,
            at: now,
        });
        Ok(response)
    }

    /// Identifies the member behind a signature on `message`.
    pub fn open(&self, message: &[u8], sig: &GroupSignature) -> Result<MemberId, PaError> {
        Ok(self.manager.open(message, sig)?)
    }

    /// Revokes the signer of `sig`; later signatures by it stop verifying
    /// against [`ProvisioningAuthority::revocation_list`].
    pub fn revoke(&mut self, sig: &GroupSignature) -> Result<(), PaError> {
        self.revoked = crate::groupsig::revoke_by_signature(&self.revoked, self.gpk(), sig)?;
        Ok(())
    }
}
