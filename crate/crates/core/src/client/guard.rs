//! Host-side checks before a request reaches the enclave: the server's
//! timestamp must not be in the future, a server may only push so many
//! timestamps per period, and the user may be asked to confirm.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use crate::hashchain::Timestamp;
use crate::tee::RateProofRequest;

pub const DEFAULT_CLOCK_SKEW_SECS: i64 = 120;
pub const DEFAULT_RATE_LIMIT: usize = 10;
pub const DEFAULT_RATE_PERIOD_SECS: i64 = 60;

/// When to ask the user before answering a request.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ConfirmationPolicy {
    #[default]
    AlwaysAsk,
    AskFirstVisit,
    /// Ask unless the list is on the trust list. Without a trust list this
    /// asks every time.
    AskUntrusted,
    /// Ask once more than `max` requests for the list arrived in `period_secs`.
    AskOverRate { max: usize, period_secs: i64 },
    NeverAsk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    FutureTimestamp,
    ServerRateLimit,
}

impl Rejection {
    pub fn code(self) -> &'static str {
        match self {
            Rejection::FutureTimestamp => "FUTURE_TIMESTAMP",
            Rejection::ServerRateLimit => "SERVER_RATE_LIMIT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Confirm,
    Reject(Rejection),
}

#[derive(Debug, Clone)]
pub struct Guard {
    pub policy: ConfirmationPolicy,
    pub clock_skew_secs: i64,
    pub rate_limit: usize,
    pub rate_period_secs: i64,
    trusted: BTreeSet<String>,
    seen: HashSet<String>,
    recent: HashMap<String, VecDeque<Timestamp>>,
}

impl Default for Guard {
    fn default() -> Self {
        Self::new(ConfirmationPolicy::default())
    }
}

impl Guard {
    pub fn new(policy: ConfirmationPolicy) -> Self {
        Self {
            policy,
            clock_skew_secs: DEFAULT_CLOCK_SKEW_SECS,
            rate_limit: DEFAULT_RATE_LIMIT,
            rate_period_secs: DEFAULT_RATE_PERIOD_SECS,
            trusted: BTreeSet::new(),
            seen: HashSet::new(),
            recent: HashMap::new(),
        }
    }

    pub fn trust(&mut self, list_name: impl Into<String>) {
        self.trusted.insert(list_name.into());
    }

    fn recent_count(&mut self, name: &str, now: Timestamp, period: i64) -> usize {
        let Some(q) = self.recent.get_mut(name) else {
            return 0;
        };
        let horizon = now.saturating_add(-period);
        while q.front().is_some_and(|&t| t <= horizon) {
            q.pop_front();
        }
        q.len()
    }

    /// Decides what to do with `req` at local time `now`. Requests that are
    /// not rejected count toward the per-list rate limit.
    pub fn guard_request(&mut self, req: &RateProofRequest, now: Timestamp) -> Decision {
        if req.t > now.saturating_add(self.clock_skew_secs) {
            return Decision::Reject(Rejection::FutureTimestamp);
        }
        let name = req.list_name.as_str();
        if self.recent_count(name, now, self.rate_period_secs) >= self.rate_limit {
            return Decision::Reject(Rejection::ServerRateLimit);
        }

        let ask = match &self.policy {
            ConfirmationPolicy::AlwaysAsk => true,
            ConfirmationPolicy::AskFirstVisit => !self.seen.contains(name),
            ConfirmationPolicy::AskUntrusted => !self.trusted.contains(name),
            ConfirmationPolicy::AskOverRate { max, period_secs } => {
                let (max, period) = (*max, *period_secs);
                self.recent_count(name, now, period) >= max
            }
            ConfirmationPolicy::NeverAsk => false,
        };

        self.seen.insert(name.to_owned());
        self.recent.entry(name.to_owned()).or_default().push_back(now);
        if ask {
            Decision::Confirm
        } else {
            Decision::Accept
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(name: &str, t: i32) -> RateProofRequest {
        RateProofRequest {
            t: Timestamp(t),
            t_s: Timestamp(0),
            k: 1,
            list_name: name.into(),
            server_pk: None,
            server_sig: None,
            prune_point: None,
            nonce: [0; 16],
        }
    }

    #[test]
    fn future_timestamp_rejected() {
        let mut g = Guard::new(ConfirmationPolicy::NeverAsk);
        let now = Timestamp(1_000_000);
        assert_eq!(
            g.guard_request(&req("a", 1_003_600), now),
            Decision::Reject(Rejection::FutureTimestamp)
        );
        assert_eq!(g.guard_request(&req("a", 1_000_120), now), Decision::Accept);
        assert_eq!(
            g.guard_request(&req("a", 1_000_121), now),
            Decision::Reject(Rejection::FutureTimestamp)
        );
    }

    #[test]
    fn eleventh_request_in_a_minute_rejected() {
        let mut g = Guard::new(ConfirmationPolicy::NeverAsk);
        for i in 0..10 {
            assert_eq!(g.guard_request(&req("a", 100 + i), Timestamp(100 + i)), Decision::Accept);
        }
        assert_eq!(
            g.guard_request(&req("a", 110), Timestamp(110)),
            Decision::Reject(Rejection::ServerRateLimit)
        );
        // Other lists are unaffected; the window slides.
        assert_eq!(g.guard_request(&req("b", 110), Timestamp(110)), Decision::Accept);
        assert_eq!(g.guard_request(&req("a", 160), Timestamp(160)), Decision::Accept);
    }

    #[test]
    fn policies() {
        let now = Timestamp(100);
        let mut g = Guard::default();
        assert_eq!(g.guard_request(&req("a", 100), now), Decision::Confirm);

        let mut g = Guard::new(ConfirmationPolicy::AskFirstVisit);
        assert_eq!(g.guard_request(&req("a", 100), now), Decision::Confirm);
        assert_eq!(g.guard_request(&req("a", 100), now), Decision::Accept);

        let mut g = Guard::new(ConfirmationPolicy::AskUntrusted);
        assert_eq!(g.guard_request(&req("a", 100), now), Decision::Confirm);
        g.trust("a");
        assert_eq!(g.guard_request(&req("a", 100), now), Decision::Accept);
        assert_eq!(g.guard_request(&req("b", 100), now), Decision::Confirm);

        let mut g = Guard::new(ConfirmationPolicy::AskOverRate {
            max: 2,
            period_secs: 3600,
        });
        assert_eq!(g.guard_request(&req("a", 100), now), Decision::Accept);
        assert_eq!(g.guard_request(&req("a", 100), now), Decision::Accept);
        assert_eq!(g.guard_request(&req("a", 100), now), Decision::Confirm);
    }
}
