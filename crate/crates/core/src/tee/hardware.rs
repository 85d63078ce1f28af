//! Emulated platform hardware: a sealing key and one monotonic counter.
//!
//! On disk the state is `"CHW1" || key(32) || BE8(counter)`. Everything else
//! the client stores may be read or replaced by an attacker; this file stands
//! in for fuses and counter silicon and is treated as tamper-proof.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use rand::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};

use super::attest::ManufacturerKey;
use crate::codec::{Reader, Writer};

const MAGIC: &[u8; 4] = b"CHW1";
const FILE_LEN: usize = 4 + 32 + 8;

#[derive(Debug, thiserror::Error)]
pub enum HardwareError {
    #[error("hardware state file: {0}")]
    Io(#[from] io::Error),
    #[error("hardware state file is corrupt")]
    Corrupt,
    #[error("monotonic counter moved from {expected} to {actual}")]
    CounterMoved { expected: u64, actual: u64 },
}

struct State {
    sealing_key: [u8; 32],
    counter: u64,
    path: Option<PathBuf>,
}

impl State {
    fn persist(&self, counter: u64) -> io::Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut w = Writer::new();
        w.raw(MAGIC).raw(&self.sealing_key).u64(counter);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, w.finish())?;
        fs::rename(tmp, path)
    }
}

/// Handle to one emulated platform. Clones share the same hardware.
#[derive(Clone)]
pub struct Platform {
    state: Arc<Mutex<State>>,
    platform_id: [u8; 32],
    manufacturer: ManufacturerKey,
}

impl Platform {
    /// A platform that lives only in memory.
    pub fn in_memory<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        Self::from_parts(key, 0, None)
    }

    /// Loads the hardware file at `path`, creating a fresh platform if it
    /// does not exist.
    pub fn open<R: RngCore + CryptoRng>(path: &Path, rng: &mut R) -> Result<Self, HardwareError> {
        match fs::read(path) {
            Ok(bytes) => {
                if bytes.len() != FILE_LEN || &bytes[..4] != MAGIC {
                    return Err(HardwareError::Corrupt);
                }
                let mut r = Reader::new(&bytes[4..]);
                let key = r.array().map_err(|_| HardwareError::Corrupt)?;
                let counter = r.u64().map_err(|_| HardwareError::Corrupt)?;
                Ok(Self::from_parts(key, counter, Some(path.to_owned())))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                let mut key = [0u8; 32];
                rng.fill_bytes(&mut key);
                let platform = Self::from_parts(key, 0, Some(path.to_owned()));
                platform.lock().persist(0)?;
                Ok(platform)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn from_parts(sealing_key: [u8; 32], counter: u64, path: Option<PathBuf>) -> Self {
        let platform_id = Sha256::new()
            .chain_update(b"cacti-platform-id")
            .chain_update(sealing_key)
            .finalize()
            .into();
        Self {
            state: Arc::new(Mutex::new(State {
                sealing_key,
                counter,
                path,
            })),
            platform_id,
            manufacturer: ManufacturerKey::development(),
        }
    }

    /// Replaces the manufacturer attestation key (the development key by
    /// default). Not part of the hardware file: it ships with the emulator.
    pub fn with_manufacturer(mut self, key: ManufacturerKey) -> Self {
        self.manufacturer = key;
        self
    }

    pub(crate) fn manufacturer(&self) -> &ManufacturerKey {
        &self.manufacturer
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn platform_id(&self) -> [u8; 32] {
        self.platform_id
    }

    pub fn counter(&self) -> u64 {
        self.lock().counter
    }

    pub(crate) fn sealing_key(&self) -> [u8; 32] {
        self.lock().sealing_key
    }

    /// Moves the counter from `expected` to `expected + 1`. Fails without
    /// effect if another session already moved it.
    pub(crate) fn increment_from(&self, expected: u64) -> Result<u64, HardwareError> {
        let mut state = self.lock();
        if state.counter != expected {
            return Err(HardwareError::CounterMoved {
                expected,
                actual: state.counter,
            });
        }
        let next = expected + 1;
        state.persist(next)?;
        state.counter = next;
        Ok(next)
    }
}

impl std::fmt::Debug for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Platform")
            .field("platform_id", &hex::encode(self.platform_id))
            .field("counter", &self.counter())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    #[test]
    fn counter_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hardware.bin");
        let p = Platform::open(&path, &mut OsRng).unwrap();
        assert_eq!(p.increment_from(0).unwrap(), 1);
        assert_eq!(p.increment_from(1).unwrap(), 2);
        let again = Platform::open(&path, &mut OsRng).unwrap();
        assert_eq!(again.counter(), 2);
        assert_eq!(again.platform_id(), p.platform_id());
        assert_eq!(fs::read(&path).unwrap().len(), FILE_LEN);
    }

    #[test]
    fn stale_increment_is_refused() {
        let p = Platform::in_memory(&mut OsRng);
        p.increment_from(0).unwrap();
        assert!(matches!(
            p.increment_from(0),
            Err(HardwareError::CounterMoved { expected: 0, actual: 1 })
        ));
        assert_eq!(p.counter(), 1);
    }

    #[test]
    fn corrupt_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hardware.bin");
        fs::write(&path, b"nope").unwrap();
        assert!(matches!(
            Platform::open(&path, &mut OsRng),
            Err(HardwareError::Corrupt)
        ));
    }
}
