use std::sync::atomic::{AtomicI32, Ordering};
use std::sync::Arc;

use rand::rngs::OsRng;

use cacti_core::client::{ConfirmationPolicy, Guard, Host};
use cacti_core::services::{ProvisioningAuthority, ThresholdPolicy, TrustedPa, Verifier};
use cacti_core::tee::{ManufacturerKey, Platform, ServerKey};
use cacti_core::Timestamp;
use cacti_http::{pa_router, verifier_router, Clock, HttpClient, PaState, Running, VerifierState};

use crate::lab::EPOCH;

/// A PA and one verifier served over loopback HTTP, sharing a settable clock.
pub struct Deployment {
    pub manufacturer: ManufacturerKey,
    pub clock: Arc<AtomicI32>,
    pub pa_state: PaState,
    pub verifier_state: VerifierState,
    pub pa: Running,
    pub verifier: Running,
}

impl Deployment {
    pub fn start(policy: ThresholdPolicy) -> std::io::Result<Self> {
        let manufacturer = ManufacturerKey::generate(&mut OsRng);
        let clock = Arc::new(AtomicI32::new(EPOCH.0));
        let pa = ProvisioningAuthority::new("bench-pa", manufacturer.clone(), &mut OsRng)
            .expect("128-bit groups are supported");
        let trusted = TrustedPa {
            name: pa.name.clone(),
            gpk: pa.gpk().clone(),
            revoked: Default::default(),
        };
        let verifier = Verifier::new(policy, Some(ServerKey::generate(&mut OsRng)), vec![trusted]);
        let pa_state = PaState::new(pa, clock_of(&clock));
        let verifier_state = VerifierState::new(verifier, clock_of(&clock));
        Ok(Self {
            pa: Running::spawn(pa_router(pa_state.clone()))?,
            verifier: Running::spawn(verifier_router(verifier_state.clone()))?,
            manufacturer,
            clock,
            pa_state,
            verifier_state,
        })
    }

    pub fn now(&self) -> Timestamp {
        Timestamp(self.clock.load(Ordering::SeqCst))
    }

    pub fn advance(&self, secs: i32) -> Timestamp {
        Timestamp(self.clock.fetch_add(secs, Ordering::SeqCst) + secs)
    }

    pub fn pa_client(&self) -> HttpClient {
        HttpClient::new(self.pa.addr)
    }

    pub fn verifier_client(&self) -> HttpClient {
        HttpClient::new(self.verifier.addr)
    }

    /// An unprovisioned in-memory client on a platform the PA trusts.
    pub fn host(&self) -> Host {
        let platform = Platform::in_memory(&mut OsRng).with_manufacturer(self.manufacturer.clone());
        let mut host = Host::in_memory(platform).expect("in-memory store");
        host.guard = Guard::new(ConfirmationPolicy::NeverAsk);
        host
    }
}

fn clock_of(t: &Arc<AtomicI32>) -> Clock {
    let t = t.clone();
    Arc::new(move || Timestamp(t.load(Ordering::SeqCst)))
}
