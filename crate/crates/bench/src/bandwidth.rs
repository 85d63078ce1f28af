//! Bytes on the wire for one challenge → proof exchange, HTTP headers
//! included.

use cacti_core::services::ThresholdPolicy;
use cacti_http::flows::{self, FlowError, VisitOutcome};
use cacti_http::HttpError;

use crate::deploy::Deployment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandwidthReport {
    pub sent: usize,
    pub received: usize,
}

impl BandwidthReport {
    pub fn total(&self) -> usize {
        self.sent + self.received
    }
}

/// Provisions a client, then measures its first visit: `GET /challenge`
/// and `POST /proof`. Provisioning traffic is not counted.
pub fn bench_bandwidth() -> Result<BandwidthReport, FlowError> {
    let d = Deployment::start(ThresholdPolicy::new("example.com", 86_400, 10))
        .map_err(HttpError::from)?;
    let mut host = d.host();
    flows::provision(&mut host, &d.pa_client())?;
    let visit = flows::visit(&mut host, &d.verifier_client(), d.now())?;
    if visit.outcome != VisitOutcome::CaptchaPass {
        return Err(FlowError::Status {
            status: visit.submission.map_or(0, |s| s.status),
            body: format!("{:?}", visit.outcome),
        });
    }
    Ok(BandwidthReport {
        sent: visit.bytes_sent(),
        received: visit.bytes_received(),
    })
}
