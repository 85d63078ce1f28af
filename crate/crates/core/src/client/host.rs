//! The host application: owns the store, the sealed blob and the enclave
//! session, and runs guard → evidence → `get_rate` → write-back.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::rngs::OsRng;
use thiserror::Error;
use tracing::{debug, warn};

use crate::groupsig::{GroupPublicKey, JoinRequest, JoinResponse, RevocationList};
use crate::hashchain::Timestamp;
use crate::mht::{MerkleLeaf, MerkleTree};
use crate::tee::{
    join_report_data, AttestationReport, Enclave, HardwareError, ListUpdate, Platform, RateProof,
    RateProofRequest, SealedState, TeeError, GLOBAL_LIST,
};

use super::evidence::{self, assemble_evidence};
use super::guard::{Decision, Guard, Rejection};
use super::journal::{self, JournalEntry};
use super::store::{AuditReport, Store, StoreError};
use super::wire::{self, ErrorReply, FrameError, Message};

#[derive(Debug, Error)]
pub enum HostError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Tee(#[from] TeeError),
    #[error("request rejected: {}", .0.code())]
    Rejected(Rejection),
    #[error("user declined the request")]
    Declined,
    #[error("provisioning failed: {0}")]
    Provisioning(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("simulated crash")]
    Crashed,
}

impl From<HardwareError> for HostError {
    fn from(e: HardwareError) -> Self {
        match e {
            HardwareError::Io(io) => HostError::Io(io),
            other => HostError::Io(io::Error::new(io::ErrorKind::InvalidData, other.to_string())),
        }
    }
}

impl HostError {
    pub fn code(&self) -> &'static str {
        match self {
            HostError::Store(StoreError::Corrupt(_)) => "STORE_CORRUPT",
            HostError::Store(_) => "STORE_ERROR",
            HostError::Tee(e) => e.code(),
            HostError::Rejected(r) => r.code(),
            HostError::Declined => "USER_DECLINED",
            HostError::Provisioning(_) => "PROVISIONING_FAILED",
            HostError::Io(_) => "IO_ERROR",
            HostError::Crashed => "CRASHED",
        }
    }
}

/// File names inside a host's home directory.
#[derive(Debug, Clone)]
pub struct HostPaths {
    pub home: PathBuf,
}

impl HostPaths {
    pub fn store(&self) -> PathBuf {
        self.home.join("store.db")
    }
    pub fn sealed(&self) -> PathBuf {
        self.home.join("sealed.bin")
    }
    pub fn hardware(&self) -> PathBuf {
        self.home.join("hardware.bin")
    }
    pub fn journal(&self) -> PathBuf {
        self.home.join("journal.bin")
    }
    pub fn revocation(&self) -> PathBuf {
        self.home.join("revocation.bin")
    }
}

/// Where to stop during a write-back, to exercise crash recovery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    AfterJournal,
    AfterSealed,
    AfterStore,
}

/// Wall-clock split of one request, as the benchmarks report it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTimes {
    pub pre_enclave: Duration,
    pub in_enclave: Duration,
    pub post_enclave: Duration,
}

/// Result of a full audit of the host's state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostAudit {
    pub store: AuditReport,
    /// The store's leaves rebuild the root the enclave holds.
    pub root_matches: bool,
}

impl HostAudit {
    pub fn is_clean(&self) -> bool {
        self.store.is_clean() && self.root_matches
    }
}

type Confirmer = Box<dyn FnMut(&RateProofRequest) -> bool + Send>;

pub struct Host {
    paths: Option<HostPaths>,
    platform: Platform,
    store: Store,
    enclave: Enclave,
    tree: MerkleTree,
    sealed: Option<SealedState>,
    revoked: RevocationList,
    pub guard: Guard,
    confirmer: Confirmer,
    /// Recompute stored hashes while assembling evidence.
    pub recheck_chains: bool,
    crash_point: Option<CrashPoint>,
}

fn read_optional(path: &Path) -> io::Result<Option<Vec<u8>>> {
    match fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

impl Host {
    /// Opens (or creates) a host in `home`. A pending journal entry is
    /// replayed first. Without a sealed blob the host is unprovisioned; a
    /// sealed blob that fails `init_mt` is an error.
    pub fn open(home: &Path) -> Result<Self, HostError> {
        fs::create_dir_all(home)?;
        let paths = HostPaths {
            home: home.to_owned(),
        };
        let platform = Platform::open(&paths.hardware(), &mut OsRng)?;
        Self::open_with_platform(paths, platform)
    }

    /// Like [`Host::open`] with an explicit platform handle (e.g. one with a
    /// non-default manufacturer key).
    pub fn open_with_platform(paths: HostPaths, platform: Platform) -> Result<Self, HostError> {
        fs::create_dir_all(&paths.home)?;
        let mut store = Store::open(&paths.store())?;
        if let Some(entry) = journal::read(&paths.journal())? {
            warn!("replaying journal left by an interrupted update");
            journal::write_durably(&paths.sealed(), entry.sealed.as_bytes())?;
            if let Some(update) = &entry.update {
                store.apply_update(update)?;
            }
            journal::clear(&paths.journal())?;
        }
        let revoked = match read_optional(&paths.revocation())? {
            Some(bytes) => RevocationList::from_bytes(&bytes)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?,
            None => RevocationList::new(),
        };
        let sealed = read_optional(&paths.sealed())?.map(SealedState::from_bytes);
        Self::assemble(Some(paths), platform, store, sealed, revoked)
    }

    /// A host with no files at all.
    pub fn in_memory(platform: Platform) -> Result<Self, HostError> {
        Self::assemble(None, platform, Store::in_memory()?, None, RevocationList::new())
    }

    fn assemble(
        paths: Option<HostPaths>,
        platform: Platform,
        store: Store,
        sealed: Option<SealedState>,
        revoked: RevocationList,
    ) -> Result<Self, HostError> {
        let leaves = store.leaves()?;
        let tree = MerkleTree::build(leaves.clone()).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        let enclave = match &sealed {
            Some(blob) => Enclave::init_mt(platform.clone(), leaves, blob)?,
            None => Enclave::unprovisioned(platform.clone()),
        };
        Ok(Self {
            paths,
            platform,
            store,
            enclave,
            tree,
            sealed,
            revoked,
            guard: Guard::default(),
            confirmer: Box::new(|_| false),
            recheck_chains: false,
            crash_point: None,
        })
    }

    pub fn paths(&self) -> Option<&HostPaths> {
        self.paths.as_ref()
    }

    pub fn platform(&self) -> &Platform {
        &self.platform
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn enclave(&self) -> &Enclave {
        &self.enclave
    }

    pub fn sealed(&self) -> Option<&SealedState> {
        self.sealed.as_ref()
    }

    pub fn leaves(&self) -> &[MerkleLeaf] {
        self.tree.leaves()
    }

    pub fn revocation_list(&self) -> &RevocationList {
        &self.revoked
    }

    /// Called when the guard asks for confirmation; the default declines.
    pub fn set_confirmer(&mut self, f: impl FnMut(&RateProofRequest) -> bool + Send + 'static) {
        self.confirmer = Box::new(f);
    }

    /// Stops the next write-back at `point` with [`HostError::Crashed`].
    /// The host must be dropped and reopened afterwards.
    pub fn inject_crash(&mut self, point: CrashPoint) {
        self.crash_point = Some(point);
    }

    /// Replaces the revocation list the enclave proves non-membership
    /// against.
    pub fn set_revocation_list(&mut self, list: RevocationList) -> Result<(), HostError> {
        if let Some(p) = &self.paths {
            journal::write_durably(&p.revocation(), &list.to_bytes())?;
        }
        self.revoked = list;
        Ok(())
    }

    /// Joins the group behind `gpk`. `join` carries the attestation report
    /// and join request to the provisioning authority and returns its
    /// answer. Any lists from an earlier key are dropped, since the new
    /// sealed state starts from an empty tree.
    pub fn provision<F>(&mut self, gpk: &GroupPublicKey, challenge: &[u8], join: F) -> Result<(), HostError>
    where
        F: FnOnce(&AttestationReport, &JoinRequest) -> Result<JoinResponse, String>,
    {
        let request = self.enclave.begin_provisioning(gpk)?;
        let report = self.enclave.attest(challenge, join_report_data(&request));
        let response = join(&report, &request).map_err(HostError::Provisioning)?;
        let sealed = self.enclave.provision(&response)?;
        self.store.clear()?;
        self.tree = MerkleTree::default();
        self.commit(sealed, None)
    }

    /// Handles one request from a server at local time `now`.
    pub fn visit(&mut self, req: &RateProofRequest, now: Timestamp) -> Result<RateProof, HostError> {
        self.visit_timed(req, now).map(|(proof, _)| proof)
    }

    pub fn visit_timed(
        &mut self,
        req: &RateProofRequest,
        now: Timestamp,
    ) -> Result<(RateProof, PhaseTimes), HostError> {
        match self.guard.guard_request(req, now) {
            Decision::Reject(r) => return Err(HostError::Rejected(r)),
            Decision::Confirm if !(self.confirmer)(req) => return Err(HostError::Declined),
            _ => {}
        }
        let started = Instant::now();
        let evidence = assemble_evidence(&self.store, &self.tree, req, self.recheck_chains)?;
        let pre = started.elapsed();

        let started = Instant::now();
        let outcome = self.enclave.get_rate(req, &evidence, &self.revoked)?;
        let inside = started.elapsed();

        let started = Instant::now();
        self.commit(outcome.sealed, Some(outcome.update))?;
        let post = started.elapsed();
        debug!(list = %req.list_name, "rate-proof issued");
        Ok((
            outcome.proof,
            PhaseTimes {
                pre_enclave: pre,
                in_enclave: inside,
                post_enclave: post,
            },
        ))
    }

    /// Merges global-list timestamps before `prune_point` into its count.
    /// Returns whether anything changed.
    pub fn prune_global(&mut self, prune_point: Timestamp) -> Result<bool, HostError> {
        let Some(list) = self.store.list(GLOBAL_LIST)? else {
            return Ok(false);
        };
        let ev = evidence::existing(
            &self.store,
            &self.tree,
            &list,
            Timestamp(i32::MIN),
            true,
            self.recheck_chains,
        )?;
        match self.enclave.prune_global(prune_point, &ev)? {
            Some(out) => {
                self.commit(out.sealed, Some(out.update))?;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    /// Journal, then sealed blob, then store; see [`journal`].
    fn commit(&mut self, sealed: SealedState, update: Option<ListUpdate>) -> Result<(), HostError> {
        let crash = self.crash_point.take();
        if let Some(p) = &self.paths {
            let entry = JournalEntry {
                sealed: sealed.clone(),
                update: update.clone(),
            };
            journal::write(&p.journal(), &entry)?;
            if crash == Some(CrashPoint::AfterJournal) {
                return Err(HostError::Crashed);
            }
            journal::write_durably(&p.sealed(), sealed.as_bytes())?;
            if crash == Some(CrashPoint::AfterSealed) {
                return Err(HostError::Crashed);
            }
        }
        if let Some(update) = &update {
            self.store.apply_update(update)?;
        }
        if crash == Some(CrashPoint::AfterStore) {
            return Err(HostError::Crashed);
        }
        if let Some(p) = &self.paths {
            journal::clear(&p.journal())?;
        }
        if let Some(update) = &update {
            let name = &update.info.name;
            let result = if update.is_new {
                self.tree.insert(MerkleLeaf::new(name.clone(), update.final_hash))
            } else {
                self.tree.update(name, update.final_hash)
            };
            result.map_err(|e| StoreError::Corrupt(e.to_string()))?;
        }
        self.sealed = Some(sealed);
        Ok(())
    }

    /// Recomputes every chain and the Merkle root from the store.
    pub fn audit(&self) -> Result<HostAudit, HostError> {
        let store = self.store.audit()?;
        let rebuilt = MerkleTree::build(self.store.leaves()?)
            .map_err(|e| StoreError::Corrupt(e.to_string()))?;
        Ok(HostAudit {
            store,
            root_matches: self.enclave.root() == Some(rebuilt.root()),
        })
    }

    /// Starts a fresh enclave session from the stored leaves and sealed
    /// blob, as a restarted host would. Returns how long `init_mt` took.
    pub fn reinit_enclave(&mut self) -> Result<Duration, HostError> {
        let sealed = self.sealed.clone().ok_or(TeeError::NotProvisioned)?;
        let leaves = self.store.leaves()?;
        let started = Instant::now();
        self.enclave = Enclave::init_mt(self.platform.clone(), leaves, &sealed)?;
        Ok(started.elapsed())
    }

    /// Loads pre-built lists straight into the store and the enclave without
    /// producing proofs. Emulator-only; see the `fixtures` feature.
    #[cfg(feature = "fixtures")]
    pub fn seed_lists(
        &mut self,
        lists: &[(crate::hashchain::ListInfo, Vec<Timestamp>)],
    ) -> Result<(), HostError> {
        for (info, stamps) in lists {
            self.store.insert_list(info, stamps)?;
        }
        let leaves = self.store.leaves()?;
        let sealed = self.enclave.install_lists(leaves.clone())?;
        self.tree = MerkleTree::build(leaves).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        self.commit(sealed, None)
    }

    /// One framed message in, one framed message out.
    pub fn process_message(&mut self, frame: &[u8]) -> Vec<u8> {
        self.process_message_at(frame, Timestamp::now())
    }

    pub fn process_message_at(&mut self, frame: &[u8], now: Timestamp) -> Vec<u8> {
        let reply = match wire::decode_frame(frame) {
            Err(FrameError::Oversized(n)) => {
                Message::Error(ErrorReply::new("FRAME_TOO_LARGE", format!("{n} bytes")))
            }
            Err(e) => Message::Error(ErrorReply::new("MALFORMED_FRAME", e)),
            Ok(body) => self.handle_body(body, now),
        };
        wire::encode_frame(&reply.encode()).expect("replies are small")
    }

    fn handle_body(&mut self, body: &[u8], now: Timestamp) -> Message {
        match Message::decode(body) {
            Err(e) => Message::Error(ErrorReply::new(e.code(), e)),
            Ok(Message::VisitRequest { request, .. }) => Message::VisitResponse(
                self.visit(&request, now)
                    .map_err(|e| ErrorReply::new(e.code(), &e)),
            ),
            Ok(Message::PruneGlobal { prune_point }) => Message::PruneResponse(
                self.prune_global(prune_point)
                    .map_err(|e| ErrorReply::new(e.code(), &e)),
            ),
            Ok(other) => Message::Error(ErrorReply::new(
                "UNEXPECTED_MESSAGE",
                format!("{} is not a request", other.to_fields().kind),
            )),
        }
    }

    /// Serves framed messages until the input ends. A broken frame is
    /// answered with an error and ends the session, since the stream can no
    /// longer be re-synchronised.
    pub fn run_stdio<R: Read, W: Write>(&mut self, input: &mut R, output: &mut W) -> Result<(), HostError> {
        loop {
            let body = match wire::read_frame(input) {
                Ok(Some(body)) => body,
                Ok(None) => return Ok(()),
                Err(FrameError::Io(e)) => return Err(e.into()),
                Err(e) => {
                    let code = match e {
                        FrameError::Oversized(_) => "FRAME_TOO_LARGE",
                        _ => "MALFORMED_FRAME",
                    };
                    let reply = Message::Error(ErrorReply::new(code, e));
                    wire::write_frame(output, &reply.encode()).map_err(frame_io)?;
                    return Ok(());
                }
            };
            let reply = self.handle_body(&body, Timestamp::now());
            wire::write_frame(output, &reply.encode()).map_err(frame_io)?;
        }
    }
}

fn frame_io(e: FrameError) -> HostError {
    match e {
        FrameError::Io(io) => HostError::Io(io),
        other => HostError::Io(io::Error::new(io::ErrorKind::InvalidData, other.to_string())),
    }
}
