//! Tamper-evident timestamp lists.
//!
//! Each named list stores its timestamps in a hash chain:
//!
//! ```text
//! h_0 = SHA256(BE4(ts_0))
//! h_i = SHA256(h_{i-1} || BE4(ts_i))
//! final_hash = SHA256(head || encode(list info))
//! ```
//!
//! where `head` is the last chain value, or 32 zero bytes for an empty chain.
//! The final hash is the list's leaf in the Merkle tree, so it binds the
//! timestamps to the list name, the owner key and the prune state.

use std::fmt;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::digest::{sha256, Digest, ZERO_DIGEST};

/// Maximum list name length in bytes.
pub const MAX_NAME_LEN: usize = 255;

/// UNIX seconds, stored as a 4-byte signed integer and hashed big-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i32);

impl Timestamp {
    pub const fn new(seconds: i32) -> Self {
        Self(seconds)
    }

    pub const fn seconds(self) -> i32 {
        self.0
    }

    pub const fn to_be_bytes(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }

    /// Current wall-clock time, saturated to the 4-byte range.
    pub fn now() -> Self {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self(i32::try_from(secs).unwrap_or(i32::MAX))
    }

    pub fn saturating_add(self, secs: i64) -> Self {
        let v = (self.0 as i64 + secs).clamp(i32::MIN as i64, i32::MAX as i64);
        Self(v as i32)
    }
}

impl From<i32> for Timestamp {
    fn from(v: i32) -> Self {
        Self(v)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("list name must be 1..=255 bytes")]
    InvalidListName,
    #[error("prune count set without a prune point")]
    InconsistentPruneState,
    #[error("boundary timestamp is not before the range start")]
    BoundaryNotBeforeStart,
    #[error("range timestamp {0} is before the range start")]
    RangeBeforeStart(Timestamp),
    #[error("timestamps are not strictly increasing")]
    NotStrictlyIncreasing,
    #[error("prefix hash supplied without a boundary timestamp")]
    PrefixWithoutBoundary,
    #[error("recomputed final hash does not match")]
    HashMismatch,
    #[error("rate exceeded: {count} timestamps since start, limit {limit}")]
    RateExceeded { count: u64, limit: u64 },
}

/// Identity and prune state of one list; hashed into its final hash.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ListInfo {
    pub name: String,
    pub owner_pk: Option<Vec<u8>>,
    pub prune_point: Option<Timestamp>,
    pub prune_count: u64,
}

impl ListInfo {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            owner_pk: None,
            prune_point: None,
            prune_count: 0,
        }
    }

    pub fn with_owner(mut self, pk: Vec<u8>) -> Self {
        self.owner_pk = Some(pk);
        self
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        validate_name(&self.name)?;
        if self.prune_point.is_none() && self.prune_count != 0 {
            return Err(ChainError::InconsistentPruneState);
        }
        Ok(())
    }

    /// `BE4(len name) || name || pk_flag || pk? || tP_flag || BE4(t_P)? || BE8(c_P)`
    pub fn encode(&self) -> Result<Vec<u8>, ChainError> {
        self.validate()?;
        let mut w = Writer::new();
        w.u32(self.name.len() as u32).raw(self.name.as_bytes());
        match &self.owner_pk {
            Some(pk) => w.u8(1).raw(pk),
            None => w.u8(0),
        };
        match self.prune_point {
            Some(tp) => w.u8(1).i32(tp.0),
            None => w.u8(0),
        };
        w.u64(self.prune_count);
        Ok(w.finish())
    }

    /// Number of pruned timestamps that a window starting at `start` must
    /// count. Merged timestamps all lie before the prune point, so when the
    /// window starts after the prune point none of them are in it.
    pub fn pruned_contribution(&self, start: Timestamp) -> u64 {
        match self.prune_point {
            Some(tp) if tp >= start => self.prune_count,
            _ => 0,
        }
    }

    /// Self-delimiting encoding for storage (the owner key is length-prefixed
    /// here, unlike the hashing encoding where the name delimits it).
    pub(crate) fn write_to(&self, w: &mut Writer) {
        w.bytes(self.name.as_bytes())
            .opt_bytes(self.owner_pk.as_deref());
        match self.prune_point {
            Some(tp) => w.u8(1).i32(tp.0),
            None => w.u8(0),
        };
        w.u64(self.prune_count);
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let name = String::from_utf8(r.bytes()?.to_vec())
            .map_err(|_| DecodeError::Invalid("list name"))?;
        let owner_pk = r.opt_bytes()?.map(<[u8]>::to_vec);
        let prune_point = if r.flag()? {
            Some(Timestamp(r.i32()?))
        } else {
            None
        };
        let prune_count = r.u64()?;
        Ok(Self {
            name,
            owner_pk,
            prune_point,
            prune_count,
        })
    }
}

pub fn validate_name(name: &str) -> Result<(), ChainError> {
    if name.is_empty() || name.len() > MAX_NAME_LEN {
        Err(ChainError::InvalidListName)
    } else {
        Ok(())
    }
}

/// One stored timestamp and the chain value up to and including it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainEntry {
    pub ts: Timestamp,
    pub hash: Digest,
}

pub fn chain_extend(prev_head: Option<&Digest>, ts: Timestamp) -> Digest {
    match prev_head {
        Some(prev) => sha256(&[prev, &ts.to_be_bytes()]),
        None => sha256(&[&ts.to_be_bytes()]),
    }
}

pub fn final_hash(chain_head: Option<&Digest>, info: &ListInfo) -> Result<Digest, ChainError> {
    let encoded = info.encode()?;
    let head = chain_head.unwrap_or(&ZERO_DIGEST);
    Ok(sha256(&[head, &encoded]))
}

/// Builds the chain entries for `timestamps`, continuing from `prev_head`.
pub fn build_chain(prev_head: Option<&Digest>, timestamps: &[Timestamp]) -> Vec<ChainEntry> {
    let mut head = prev_head.copied();
    timestamps
        .iter()
        .map(|&ts| {
            let hash = chain_extend(head.as_ref(), ts);
            head = Some(hash);
            ChainEntry { ts, hash }
        })
        .collect()
}

/// The part of a chain the host presents for a window starting at `t_s`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RangeEvidence {
    /// Chain value just before `boundary`; absent when `boundary` is the first
    /// entry (or when there is no boundary).
    pub prefix_head: Option<Digest>,
    /// Largest stored timestamp strictly before `t_s`, if any.
    pub boundary: Option<Timestamp>,
    /// Every stored timestamp `>= t_s`, ascending.
    pub in_range: Vec<Timestamp>,
}

/// Result of a successful [`verify_range`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangeCheck {
    /// Timestamps in the window plus the pruned contribution.
    pub count: u64,
    /// Recomputed chain head (absent for an empty chain).
    pub head: Option<Digest>,
    /// Latest timestamp still present in the chain.
    pub latest: Option<Timestamp>,
}

/// Recomputes the chain over the presented range and checks it against
/// `expected_final`, then checks the count against `k`.
///
/// Performs exactly `|in_range| + (1 if boundary) + 1` hash invocations.
pub fn verify_range(
    evidence: &RangeEvidence,
    expected_final: &Digest,
    info: &ListInfo,
    t_s: Timestamp,
    k: u64,
) -> Result<RangeCheck, ChainError> {
    validate_name(&info.name)?;
    if evidence.prefix_head.is_some() && evidence.boundary.is_none() {
        return Err(ChainError::PrefixWithoutBoundary);
    }
    if let Some(b) = evidence.boundary {
        if b >= t_s {
            return Err(ChainError::BoundaryNotBeforeStart);
        }
    }
    if let Some(&ts) = evidence.in_range.iter().find(|&&ts| ts < t_s) {
        return Err(ChainError::RangeBeforeStart(ts));
    }
    if evidence.in_range.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ChainError::NotStrictlyIncreasing);
    }

    let mut head = evidence.prefix_head;
    for ts in evidence.boundary.iter().chain(&evidence.in_range) {
        head = Some(chain_extend(head.as_ref(), *ts));
    }
    if final_hash(head.as_ref(), info)? != *expected_final {
        return Err(ChainError::HashMismatch);
    }

    let count = evidence.in_range.len() as u64 + info.pruned_contribution(t_s);
    if count > k {
        return Err(ChainError::RateExceeded { count, limit: k });
    }
    Ok(RangeCheck {
        count,
        head,
        latest: evidence.in_range.last().copied().or(evidence.boundary),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::hash_invocations;

    fn ts(v: &[i32]) -> Vec<Timestamp> {
        v.iter().copied().map(Timestamp).collect()
    }

    fn final_of(list: &[i32], info: &ListInfo) -> Digest {
        let chain = build_chain(None, &ts(list));
        final_hash(chain.last().map(|e| &e.hash), info).unwrap()
    }

    #[test]
    fn name_length_limits() {
        assert_eq!(final_hash(None, &ListInfo::new("")), Err(ChainError::InvalidListName));
        let long = "x".repeat(256);
        assert_eq!(final_hash(None, &ListInfo::new(long)), Err(ChainError::InvalidListName));
        assert!(final_hash(None, &ListInfo::new("x".repeat(255))).is_ok());
    }

    #[test]
    fn encoding_layout() {
        let mut info = ListInfo::new("ab").with_owner(vec![9, 9]);
        info.prune_point = Some(Timestamp(5));
        info.prune_count = 3;
        assert_eq!(
            info.encode().unwrap(),
            vec![0, 0, 0, 2, b'a', b'b', 1, 9, 9, 1, 0, 0, 0, 5, 0, 0, 0, 0, 0, 0, 0, 3]
        );
    }

    #[test]
    fn pruned_contribution_rule() {
        let mut info = ListInfo::new("a");
        info.prune_point = Some(Timestamp(250));
        info.prune_count = 2;
        assert_eq!(info.pruned_contribution(Timestamp(150)), 2);
        assert_eq!(info.pruned_contribution(Timestamp(250)), 2);
        assert_eq!(info.pruned_contribution(Timestamp(251)), 0);
    }

    #[test]
    fn boundary_must_precede_start() {
        let info = ListInfo::new("L");
        let fin = final_of(&[100, 200, 300], &info);
        let ev = RangeEvidence {
            prefix_head: None,
            boundary: Some(Timestamp(200)),
            in_range: ts(&[300]),
        };
        assert_eq!(
            verify_range(&ev, &fin, &info, Timestamp(200), 5),
            Err(ChainError::BoundaryNotBeforeStart)
        );
    }

    #[test]
    fn omitted_start_is_caught_by_range_check() {
        // Host pretends the range begins earlier by passing an old entry as
        // part of the range.
        let info = ListInfo::new("L");
        let fin = final_of(&[100, 200, 300], &info);
        let ev = RangeEvidence {
            prefix_head: None,
            boundary: None,
            in_range: ts(&[100, 200, 300]),
        };
        assert_eq!(
            verify_range(&ev, &fin, &info, Timestamp(150), 5),
            Err(ChainError::RangeBeforeStart(Timestamp(100)))
        );
    }

    #[test]
    fn prefix_without_boundary_rejected() {
        let info = ListInfo::new("L");
        let ev = RangeEvidence {
            prefix_head: Some([1; 32]),
            boundary: None,
            in_range: vec![],
        };
        assert_eq!(
            verify_range(&ev, &[0; 32], &info, Timestamp(0), 0),
            Err(ChainError::PrefixWithoutBoundary)
        );
    }

    #[test]
    fn hash_count_is_n_plus_two_with_boundary() {
        let info = ListInfo::new("L");
        let list: Vec<i32> = (1..=50).map(|i| i * 10).collect();
        let fin = final_of(&list, &info);
        let chain = build_chain(None, &ts(&list));
        // t_s = 205: boundary 200 (index 19), prefix is entry 18.
        let ev = RangeEvidence {
            prefix_head: Some(chain[18].hash),
            boundary: Some(Timestamp(200)),
            in_range: ts(&list[20..]),
        };
        let before = hash_invocations();
        let out = verify_range(&ev, &fin, &info, Timestamp(205), 100).unwrap();
        assert_eq!(hash_invocations() - before, 30 + 2);
        assert_eq!(out.count, 30);
        assert_eq!(out.latest, Some(Timestamp(500)));
        assert_eq!(out.head, Some(chain.last().unwrap().hash));
    }

    #[test]
    fn empty_chain_uses_zero_head() {
        let info = ListInfo::new("L");
        let fin = final_hash(None, &info).unwrap();
        let out = verify_range(&RangeEvidence::default(), &fin, &info, Timestamp(0), 0).unwrap();
        assert_eq!(out.count, 0);
        assert_eq!(out.head, None);
        assert_eq!(out.latest, None);
    }
}
