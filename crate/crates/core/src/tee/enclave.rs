//! The enclave session: `init_mt`, `get_rate`, provisioning and attestation.
//!
//! Every state-changing call works on copies and commits only after the
//! hardware counter has moved, so a failed call leaves the session, the
//! counter and the host's sealed blob exactly as they were. A successful call
//! moves the counter once and seals once.

use rand::rngs::OsRng;
use thiserror::Error;

use super::attest::AttestationReport;
use super::hardware::{HardwareError, Platform};
use super::request::{ProofResult, RateProof, RateProofRequest, GLOBAL_LIST};
use super::seal::{self, Contents, SealedState};
use crate::digest::{sha256, Digest};
use crate::groupsig::{
    self, GroupPublicKey, GroupSigError, JoinPending, JoinRequest, JoinResponse, MemberPrivateKey,
    RevocationList,
};
use crate::hashchain::{
    build_chain, chain_extend, final_hash, validate_name, verify_range, ChainEntry, ChainError,
    ListInfo, RangeEvidence, Timestamp,
};
use crate::mht::{internal_node, leaf_node, InclusionProof, MerkleLeaf, MerkleTree, Side};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TeeError {
    #[error("sealed state does not authenticate")]
    SealAuthFailed,
    #[error("sealed state or session is older than the hardware counter")]
    RollbackDetected,
    #[error("presented leaves do not match the sealed root")]
    RootMismatch,
    #[error("enclave holds no member key")]
    NotProvisioned,
    #[error("enclave already holds a member key")]
    AlreadyProvisioned,
    #[error("no join in progress")]
    NoPendingJoin,
    #[error("provisioning failed: {0}")]
    Provisioning(GroupSigError),
    #[error("list name must be 1..=255 bytes")]
    InvalidListName,
    #[error("malformed evidence: {0}")]
    MalformedEvidence(String),
    #[error("boundary timestamp is not before the range start")]
    BoundaryNotBeforeStart,
    #[error("request key or signature does not match the list owner")]
    SameOriginViolation,
    #[error("rate exceeded")]
    RateExceeded { count: u64, limit: u64 },
    #[error("recomputed final hash does not match")]
    HashMismatch,
    #[error("list is not in the Merkle tree")]
    NotInMht,
    #[error("list already exists")]
    DuplicateList,
    #[error("new timestamp does not exceed the latest one")]
    TimestampNotMonotone,
    #[error("servers may not prune the global list")]
    PruneForbidden,
    #[error("prune point lies after the new timestamp")]
    InvalidPrunePoint,
    #[error("signing failed: {0}")]
    Signing(GroupSigError),
    #[error("hardware: {0}")]
    Hardware(String),
}

impl TeeError {
    /// Stable upper-case code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            TeeError::SealAuthFailed => "SEAL_AUTH_FAILED",
            TeeError::RollbackDetected => "ROLLBACK_DETECTED",
            TeeError::RootMismatch => "ROOT_MISMATCH",
            TeeError::NotProvisioned => "NOT_PROVISIONED",
            TeeError::AlreadyProvisioned => "ALREADY_PROVISIONED",
            TeeError::NoPendingJoin => "NO_PENDING_JOIN",
            TeeError::Provisioning(_) => "PROVISIONING_FAILED",
            TeeError::InvalidListName => "INVALID_LIST_NAME",
            TeeError::MalformedEvidence(_) => "MALFORMED_EVIDENCE",
            TeeError::BoundaryNotBeforeStart => "BOUNDARY_NOT_BEFORE_START",
            TeeError::SameOriginViolation => "SAME_ORIGIN_VIOLATION",
            TeeError::RateExceeded { .. } => "RATE_EXCEEDED",
            TeeError::HashMismatch => "HASH_MISMATCH",
            TeeError::NotInMht => "NOT_IN_MHT",
            TeeError::DuplicateList => "DUPLICATE_LIST",
            TeeError::TimestampNotMonotone => "TIMESTAMP_NOT_MONOTONE",
            TeeError::PruneForbidden => "PRUNE_FORBIDDEN",
            TeeError::InvalidPrunePoint => "INVALID_PRUNE_POINT",
            TeeError::Signing(_) => "SIGNING_FAILED",
            TeeError::Hardware(_) => "HARDWARE_ERROR",
        }
    }
}

impl From<ChainError> for TeeError {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::InvalidListName => TeeError::InvalidListName,
            ChainError::BoundaryNotBeforeStart => TeeError::BoundaryNotBeforeStart,
            ChainError::HashMismatch => TeeError::HashMismatch,
            ChainError::RateExceeded { count, limit } => TeeError::RateExceeded { count, limit },
            other => TeeError::MalformedEvidence(other.to_string()),
        }
    }
}

impl From<HardwareError> for TeeError {
    fn from(e: HardwareError) -> Self {
        match e {
            HardwareError::CounterMoved { .. } => TeeError::RollbackDetected,
            other => TeeError::Hardware(other.to_string()),
        }
    }
}

/// What the host presents for an existing list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExistingList {
    pub info: ListInfo,
    pub final_hash: Digest,
    pub range: RangeEvidence,
    /// Every timestamp before `range.boundary`, oldest first. Only sent when
    /// the request prunes; `range.prefix_head` must then be absent because
    /// the enclave recomputes the whole chain.
    pub older: Vec<Timestamp>,
    pub proof: InclusionProof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Evidence {
    Existing(ExistingList),
    /// The list is unknown to the host: all leaves, so the enclave can check
    /// that the name is really absent.
    New { leaves: Vec<MerkleLeaf> },
}

/// What the host writes back after a successful call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListUpdate {
    pub info: ListInfo,
    pub final_hash: Digest,
    pub is_new: bool,
    pub appended: Option<ChainEntry>,
    /// Set after a prune: the complete chain that replaces the stored one
    /// (including `appended`).
    pub rebuilt: Option<Vec<ChainEntry>>,
    /// Effective count the threshold was checked against; host-local only.
    pub count: u64,
}

#[derive(Debug, Clone)]
pub struct RateOutcome {
    pub proof: RateProof,
    pub sealed: SealedState,
    pub update: ListUpdate,
}

#[derive(Debug, Clone)]
pub struct MaintenanceOutcome {
    pub sealed: SealedState,
    pub update: ListUpdate,
}

struct Active {
    member_key: MemberPrivateKey,
    tree: MerkleTree,
    counter: u64,
}

enum TreeChange {
    Update,
    Replace(MerkleTree),
}

struct Plan {
    update: ListUpdate,
    new_root: Digest,
    tree: TreeChange,
}

/// One enclave session bound to a platform.
pub struct Enclave {
    platform: Platform,
    active: Option<Active>,
    pending: Option<(GroupPublicKey, JoinPending)>,
}

impl Enclave {
    /// A session without a member key, ready to be provisioned.
    pub fn unprovisioned(platform: Platform) -> Self {
        Self {
            platform,
            active: None,
            pending: None,
        }
    }

    /// Unseals `sealed`, checks it is the latest state and that `leaves`
    /// rebuild the sealed root.
    pub fn init_mt(
        platform: Platform,
        leaves: Vec<MerkleLeaf>,
        sealed: &SealedState,
    ) -> Result<Self, TeeError> {
        let contents =
            seal::unseal(&platform.sealing_key(), sealed).ok_or(TeeError::SealAuthFailed)?;
        if contents.counter != platform.counter() {
            return Err(TeeError::RollbackDetected);
        }
        let tree = MerkleTree::build(leaves).map_err(|_| TeeError::RootMismatch)?;
        if tree.root() != contents.mht_root {
            return Err(TeeError::RootMismatch);
        }
        Ok(Self {
            platform,
            active: Some(Active {
                member_key: contents.member_key,
                tree,
                counter: contents.counter,
            }),
            pending: None,
        })
    }

    pub fn platform(&self) -> &Platform {
        &self.platform
    }

    pub fn is_provisioned(&self) -> bool {
        self.active.is_some()
    }

    pub fn root(&self) -> Option<Digest> {
        self.active.as_ref().map(|a| a.tree.root())
    }

    pub fn list_count(&self) -> usize {
        self.active.as_ref().map_or(0, |a| a.tree.len())
    }

    pub fn group_public_key(&self) -> Option<&GroupPublicKey> {
        self.active.as_ref().map(|a| &a.member_key.gpk)
    }

    /// Emulated quote over `challenge` and 32 bytes of report data.
    pub fn attest(&self, challenge: &[u8], report_data: Digest) -> AttestationReport {
        AttestationReport::create(
            self.platform.manufacturer(),
            self.platform.platform_id(),
            challenge,
            report_data,
        )
    }

    /// Starts joining the group behind `gpk`. The returned request should be
    /// sent together with `attest(challenge, join_report_data(&request))`.
    pub fn begin_provisioning(&mut self, gpk: &GroupPublicKey) -> Result<JoinRequest, TeeError> {
        if self.active.is_some() {
            return Err(TeeError::AlreadyProvisioned);
        }
        let (request, pending) =
            groupsig::begin_join(gpk, &mut OsRng).map_err(TeeError::Provisioning)?;
        self.pending = Some((gpk.clone(), pending));
        Ok(request)
    }

    /// Completes the join and seals the new key with an empty tree.
    pub fn provision(&mut self, response: &JoinResponse) -> Result<SealedState, TeeError> {
        if self.active.is_some() {
            return Err(TeeError::AlreadyProvisioned);
        }
        let (_, pending) = self.pending.take().ok_or(TeeError::NoPendingJoin)?;
        let member_key = pending.finish(response).map_err(TeeError::Provisioning)?;
        let tree = MerkleTree::default();
        let current = self.platform.counter();
        let sealed = self.seal(tree.root(), current + 1, &member_key);
        self.platform.increment_from(current)?;
        self.active = Some(Active {
            member_key,
            tree,
            counter: current + 1,
        });
        Ok(sealed)
    }

    fn seal(&self, root: Digest, counter: u64, member_key: &MemberPrivateKey) -> SealedState {
        seal::seal(
            &self.platform.sealing_key(),
            &Contents {
                mht_root: root,
                counter,
                member_key: member_key.clone(),
            },
            &mut OsRng,
        )
    }

    fn active(&self) -> Result<&Active, TeeError> {
        let active = self.active.as_ref().ok_or(TeeError::NotProvisioned)?;
        // Another session on the same platform may have moved on.
        if active.counter != self.platform.counter() {
            return Err(TeeError::RollbackDetected);
        }
        Ok(active)
    }

    /// Checks the request against the evidence, appends `req.t`, reseals and
    /// signs. See the module docs for the atomicity guarantee.
    pub fn get_rate(
        &mut self,
        req: &RateProofRequest,
        evidence: &Evidence,
        revoked: &RevocationList,
    ) -> Result<RateOutcome, TeeError> {
        let active = self.active()?;
        validate_name(&req.list_name)?;
        let plan = match evidence {
            Evidence::Existing(ev) => plan_existing(
                &active.tree,
                ev,
                &Step {
                    name: &req.list_name,
                    origin: Origin::Server(req),
                    t_s: req.t_s,
                    k: req.k,
                    append: Some(req.t),
                    prune_point: req.prune_point,
                },
            )?,
            Evidence::New { leaves } => plan_new(&active.tree, leaves, req)?,
        };
        let message = RateProof::signed_message(&req.digest(), ProofResult::Pass);
        let signature = groupsig::sign(&active.member_key, &message, revoked, &mut OsRng)
            .map_err(TeeError::Signing)?;
        let proof = RateProof {
            request_digest: req.digest(),
            result: ProofResult::Pass,
            signature,
        };
        let sealed = self.commit(&plan)?;
        Ok(RateOutcome {
            proof,
            sealed,
            update: plan.update,
        })
    }

    /// Client-initiated prune of the global list: merges every timestamp
    /// before `prune_point` into the prune count. `evidence.range` must hold
    /// the whole chain (no boundary, no prefix). Returns `None` when the list
    /// is already pruned at or after `prune_point`.
    pub fn prune_global(
        &mut self,
        prune_point: Timestamp,
        evidence: &ExistingList,
    ) -> Result<Option<MaintenanceOutcome>, TeeError> {
        let active = self.active()?;
        if evidence
            .info
            .prune_point
            .is_some_and(|current| prune_point <= current)
        {
            return Ok(None);
        }
        let plan = plan_existing(
            &active.tree,
            evidence,
            &Step {
                name: GLOBAL_LIST,
                origin: Origin::Client,
                t_s: Timestamp(i32::MIN),
                k: u64::MAX,
                append: None,
                prune_point: Some(prune_point),
            },
        )?;
        let sealed = self.commit(&plan)?;
        Ok(Some(MaintenanceOutcome {
            sealed,
            update: plan.update,
        }))
    }

    /// Seals the planned state under the next counter value, moves the
    /// counter, then applies the plan to the session.
    fn commit(&mut self, plan: &Plan) -> Result<SealedState, TeeError> {
        let active = self.active()?;
        let next = active.counter + 1;
        let sealed = self.seal(plan.new_root, next, &active.member_key);
        self.platform.increment_from(active.counter)?;

        let active = self.active.as_mut().expect("checked above");
        active.counter = next;
        match &plan.tree {
            TreeChange::Update => active
                .tree
                .update(&plan.update.info.name, plan.update.final_hash)
                .expect("inclusion was verified"),
            TreeChange::Replace(tree) => active.tree = tree.clone(),
        }
        debug_assert_eq!(active.tree.root(), plan.new_root);
        Ok(sealed)
    }

    /// Replaces the whole tree without producing proofs. Emulator-only: it
    /// lets benchmarks and large tests start from a populated store.
    #[cfg(feature = "fixtures")]
    pub fn install_lists(&mut self, leaves: Vec<MerkleLeaf>) -> Result<SealedState, TeeError> {
        let tree = MerkleTree::build(leaves).map_err(|_| TeeError::RootMismatch)?;
        let plan = Plan {
            update: ListUpdate {
                info: ListInfo::new("-"),
                final_hash: [0; 32],
                is_new: false,
                appended: None,
                rebuilt: None,
                count: 0,
            },
            new_root: tree.root(),
            tree: TreeChange::Replace(tree),
        };
        self.commit(&plan)
    }
}

/// Report data binding an attestation to a join request.
pub fn join_report_data(request: &JoinRequest) -> Digest {
    sha256(&[b"cacti-join", &request.0])
}

enum Origin<'a> {
    Server(&'a RateProofRequest),
    Client,
}

struct Step<'a> {
    name: &'a str,
    origin: Origin<'a>,
    t_s: Timestamp,
    k: u64,
    append: Option<Timestamp>,
    prune_point: Option<Timestamp>,
}

fn check_same_origin(owner: Option<&[u8]>, req: &RateProofRequest) -> Result<(), TeeError> {
    match (owner, req.server_pk.as_deref()) {
        (None, None) => Ok(()),
        (Some(owner), Some(pk)) if owner == pk && req.server_signature_valid() => Ok(()),
        _ => Err(TeeError::SameOriginViolation),
    }
}

fn plan_existing(tree: &MerkleTree, ev: &ExistingList, step: &Step<'_>) -> Result<Plan, TeeError> {
    if ev.info.name != step.name {
        return Err(TeeError::MalformedEvidence("list info names another list".into()));
    }

    // 1. Same origin.
    if let Origin::Server(req) = step.origin {
        check_same_origin(ev.info.owner_pk.as_deref(), req)?;
    }

    // 2. Chain and count.
    let full_chain = ev.range.prefix_head.is_none();
    let mut range = ev.range.clone();
    if !ev.older.is_empty() {
        let Some(boundary) = range.boundary else {
            return Err(TeeError::MalformedEvidence("older timestamps without a boundary".into()));
        };
        if !full_chain {
            return Err(TeeError::MalformedEvidence("older timestamps with a prefix hash".into()));
        }
        if ev.older.windows(2).any(|w| w[0] >= w[1]) || *ev.older.last().unwrap() >= boundary {
            return Err(ChainError::NotStrictlyIncreasing.into());
        }
        range.prefix_head = build_chain(None, &ev.older).last().map(|e| e.hash);
    }
    let check = verify_range(&range, &ev.final_hash, &ev.info, step.t_s, step.k)?;

    // 3. Membership in the sealed tree.
    let index = usize::try_from(ev.proof.leaf_index).map_err(|_| TeeError::NotInMht)?;
    match tree.leaves().get(index) {
        Some(leaf) if leaf.list_name == ev.info.name => {}
        _ => return Err(TeeError::NotInMht),
    }
    let root = tree.root();
    if !crate::mht::verify_inclusion(&root, &ev.final_hash, &ev.proof) {
        return Err(TeeError::NotInMht);
    }

    // 4. Monotonicity.
    if let Some(t) = step.append {
        let stale = match check.latest {
            Some(latest) => t <= latest,
            None => ev.info.prune_point.is_some_and(|tp| t < tp),
        };
        if stale {
            return Err(TeeError::TimestampNotMonotone);
        }
    }

    // 5. Pruning.
    let mut info = ev.info.clone();
    let mut rebuilt = None;
    if let Some(tp) = step.prune_point {
        if step.name == GLOBAL_LIST && matches!(step.origin, Origin::Server(_)) {
            return Err(TeeError::PruneForbidden);
        }
        if step.append.is_some_and(|t| tp > t) {
            return Err(TeeError::InvalidPrunePoint);
        }
        if info.prune_point.is_none_or(|current| tp > current) {
            if !full_chain {
                return Err(TeeError::MalformedEvidence(
                    "pruning needs the whole chain".into(),
                ));
            }
            let all: Vec<Timestamp> = ev
                .older
                .iter()
                .chain(&range.boundary)
                .chain(&range.in_range)
                .copied()
                .collect();
            let split = all.partition_point(|&ts| ts < tp);
            info.prune_point = Some(tp);
            info.prune_count += split as u64;
            let mut kept = all[split..].to_vec();
            kept.extend(step.append);
            rebuilt = Some(build_chain(None, &kept));
        }
    }

    // 6. Append and recompute.
    let (head, appended) = match &rebuilt {
        Some(chain) => (
            chain.last().map(|e| e.hash),
            step.append.map(|_| *chain.last().expect("appended entry")),
        ),
        None => match step.append {
            Some(t) => {
                let entry = ChainEntry {
                    ts: t,
                    hash: chain_extend(check.head.as_ref(), t),
                };
                (Some(entry.hash), Some(entry))
            }
            None => (check.head, None),
        },
    };
    let new_final = final_hash(head.as_ref(), &info)?;
    let new_root = fold_root(&new_final, &ev.proof);
    Ok(Plan {
        update: ListUpdate {
            info,
            final_hash: new_final,
            is_new: false,
            appended,
            rebuilt,
            count: check.count,
        },
        new_root,
        tree: TreeChange::Update,
    })
}

/// Root after replacing the proven leaf: the same fold as inclusion checking.
fn fold_root(final_hash: &Digest, proof: &InclusionProof) -> Digest {
    proof
        .siblings
        .iter()
        .fold(leaf_node(final_hash), |node, (side, sibling)| match side {
            Side::Left => internal_node(sibling, &node),
            Side::Right => internal_node(&node, sibling),
        })
}

fn plan_new(
    tree: &MerkleTree,
    leaves: &[MerkleLeaf],
    req: &RateProofRequest,
) -> Result<Plan, TeeError> {
    // 1. A new list is owned by whoever signs its first request; nobody may
    // own the global list.
    if req.server_pk.is_some() && (req.list_name == GLOBAL_LIST || !req.server_signature_valid())
    {
        return Err(TeeError::SameOriginViolation);
    }

    // 2. An empty list has count 0, which every k admits.

    // 3. The full leaf set must rebuild the sealed root and not hold the name.
    let mut rebuilt = MerkleTree::build(leaves.to_vec()).map_err(|_| TeeError::RootMismatch)?;
    if rebuilt.root() != tree.root() {
        return Err(TeeError::RootMismatch);
    }
    if rebuilt.contains_name(&req.list_name) {
        return Err(TeeError::DuplicateList);
    }

    // 4. No earlier timestamps. 5. Nothing to merge, so a prune point is
    // only policed on the global list.
    if req.prune_point.is_some() && req.list_name == GLOBAL_LIST {
        return Err(TeeError::PruneForbidden);
    }

    // 6. Create the list with its first timestamp.
    let info = ListInfo {
        name: req.list_name.clone(),
        owner_pk: req.server_pk.clone(),
        prune_point: None,
        prune_count: 0,
    };
    let entry = ChainEntry {
        ts: req.t,
        hash: chain_extend(None, req.t),
    };
    let new_final = final_hash(Some(&entry.hash), &info)?;
    rebuilt
        .insert(MerkleLeaf::new(info.name.clone(), new_final))
        .map_err(|_| TeeError::DuplicateList)?;
    Ok(Plan {
        update: ListUpdate {
            info,
            final_hash: new_final,
            is_new: true,
            appended: Some(entry),
            rebuilt: None,
            count: 0,
        },
        new_root: rebuilt.root(),
        tree: TreeChange::Replace(rebuilt),
    })
}
