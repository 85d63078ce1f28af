//! Write-ahead journal for enclave outputs.
//!
//! The enclave moves its counter before the host has stored anything, so the
//! new sealed blob and the list update are journaled first; only then are
//! `sealed.bin` and the database written. A crash in between is repaired by
//! replaying the journal on the next start.
//!
//! Layout: `"CJRN1" || bytes(sealed) || ListUpdate`.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use crate::codec::{DecodeError, Reader, Writer};
use crate::hashchain::{ChainEntry, ListInfo, Timestamp};
use crate::tee::{ListUpdate, SealedState};

const MAGIC: &[u8; 5] = b"CJRN1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalEntry {
    pub sealed: SealedState,
    pub update: Option<ListUpdate>,
}

fn write_entry(w: &mut Writer, e: &ChainEntry) {
    w.i32(e.ts.0).raw(&e.hash);
}

fn read_entry(r: &mut Reader<'_>) -> Result<ChainEntry, DecodeError> {
    Ok(ChainEntry {
        ts: Timestamp(r.i32()?),
        hash: r.array()?,
    })
}

pub fn encode(entry: &JournalEntry) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(MAGIC).bytes(entry.sealed.as_bytes());
    match &entry.update {
        None => {
            w.u8(0);
        }
        Some(u) => {
            w.u8(1);
            u.info.write_to(&mut w);
            w.raw(&u.final_hash).u8(u.is_new as u8).u64(u.count);
            match &u.appended {
                Some(e) => {
                    w.u8(1);
                    write_entry(&mut w, e);
                }
                None => {
                    w.u8(0);
                }
            }
            match &u.rebuilt {
                Some(chain) => {
                    w.u8(1).u32(chain.len() as u32);
                    for e in chain {
                        write_entry(&mut w, e);
                    }
                }
                None => {
                    w.u8(0);
                }
            }
        }
    }
    w.finish()
}

pub fn decode(bytes: &[u8]) -> Result<JournalEntry, DecodeError> {
    let mut r = Reader::new(bytes);
    if r.take(MAGIC.len())? != MAGIC {
        return Err(DecodeError::Invalid("journal magic"));
    }
    let sealed = SealedState::from_bytes(r.bytes()?.to_vec());
    let update = if r.flag()? {
        let info = ListInfo::read_from(&mut r)?;
        let final_hash = r.array()?;
        let is_new = r.flag()?;
        let count = r.u64()?;
        let appended = if r.flag()? {
            Some(read_entry(&mut r)?)
        } else {
            None
        };
        let rebuilt = if r.flag()? {
            let n = r.u32()? as usize;
            let mut chain = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                chain.push(read_entry(&mut r)?);
            }
            Some(chain)
        } else {
            None
        };
        Some(ListUpdate {
            info,
            final_hash,
            is_new,
            appended,
            rebuilt,
            count,
        })
    } else {
        None
    };
    r.finish()?;
    Ok(JournalEntry { sealed, update })
}

/// Writes `bytes` to `path` durably: temp file, fsync, rename.
pub(crate) fn write_durably(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write(path: &Path, entry: &JournalEntry) -> io::Result<()> {
    write_durably(path, &encode(entry))
}

/// Reads a pending entry; `Ok(None)` when there is none.
pub fn read(path: &Path) -> io::Result<Option<JournalEntry>> {
    match fs::read(path) {
        Ok(bytes) => decode(&bytes)
            .map(Some)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string())),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn clear(path: &Path) -> io::Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}
