use rand::rngs::OsRng;

use cacti_core::client::{ConfirmationPolicy, Guard, Host};
use cacti_core::services::ProvisioningAuthority;
use cacti_core::tee::{ManufacturerKey, Platform, RateProofRequest};
use cacti_core::Timestamp;

/// Somewhere in 2023; far from both ends of the 4-byte range.
pub const EPOCH: Timestamp = Timestamp(1_700_000_000);

/// A provisioning authority and the manufacturer whose platforms it trusts.
pub struct Lab {
    pub manufacturer: ManufacturerKey,
    pub pa: ProvisioningAuthority,
}

impl Lab {
    pub fn new() -> Self {
        let manufacturer = ManufacturerKey::generate(&mut OsRng);
        let pa = ProvisioningAuthority::new("lab-pa", manufacturer.clone(), &mut OsRng)
            .expect("128-bit groups are supported");
        Self { manufacturer, pa }
    }

    pub fn platform(&self) -> Platform {
        Platform::in_memory(&mut OsRng).with_manufacturer(self.manufacturer.clone())
    }

    /// Provisions `host` at time `now`.
    pub fn provision(&mut self, host: &mut Host, now: Timestamp) -> Result<(), cacti_core::client::HostError> {
        let challenge = self.pa.challenge(now, &mut OsRng);
        let gpk = self.pa.gpk().clone();
        let pa = &mut self.pa;
        host.provision(&gpk, &challenge, |report, req| {
            pa.handle_join(report, req, now, &mut OsRng).map_err(|e| e.to_string())
        })
    }

    /// A provisioned in-memory client that never asks the user and has no
    /// per-server request limit, for harnesses that issue many requests.
    pub fn client(&mut self) -> Host {
        let mut host = Host::in_memory(self.platform()).expect("in-memory store");
        self.provision(&mut host, EPOCH).expect("fresh platform provisions");
        host.guard = Guard::new(ConfirmationPolicy::NeverAsk);
        host.guard.rate_limit = usize::MAX;
        host
    }
}

impl Default for Lab {
    fn default() -> Self {
        Self::new()
    }
}

/// An unsigned request with a fresh nonce.
pub fn request(list: &str, t: Timestamp, t_s: Timestamp, k: u64) -> RateProofRequest {
    RateProofRequest {
        t,
        t_s,
        k,
        list_name: list.to_owned(),
        server_pk: None,
        server_sig: None,
        prune_point: None,
        nonce: rand::random(),
    }
}
