//! The host's relational store: `lists` and `timestamps`, as SQLite tables.

use std::path::Path;

use rusqlite::{params, Connection, OptionalExtension};
use thiserror::Error;

use crate::digest::Digest;
use crate::hashchain::{build_chain, final_hash, ChainEntry, ChainError, ListInfo, Timestamp};
use crate::mht::MerkleLeaf;
use crate::tee::ListUpdate;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("database: {0}")]
    Sql(#[from] rusqlite::Error),
    #[error("store is corrupt: {0}")]
    Corrupt(String),
}

impl From<ChainError> for StoreError {
    fn from(e: ChainError) -> Self {
        StoreError::Corrupt(e.to_string())
    }
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS lists (
    list_id  INTEGER PRIMARY KEY,
    name     TEXT NOT NULL UNIQUE,
    owner_pk BLOB,
    t_p      INTEGER,
    c_p      INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS timestamps (
    list_id           INTEGER NOT NULL REFERENCES lists(list_id),
    ts                INTEGER NOT NULL,
    intermediate_hash BLOB NOT NULL,
    PRIMARY KEY (list_id, ts)
) WITHOUT ROWID;
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredList {
    pub id: i64,
    pub info: ListInfo,
}

/// Boundary row, the row before it, and the rows in range, for one window.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RangeRows {
    pub before_boundary: Option<ChainEntry>,
    pub boundary: Option<ChainEntry>,
    pub in_range: Vec<ChainEntry>,
}

/// Result of recomputing every stored chain from its raw timestamps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuditReport {
    pub lists: usize,
    pub timestamps: usize,
    /// `(list name, timestamp)` of every row whose stored hash is wrong.
    pub bad_rows: Vec<(String, Timestamp)>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.bad_rows.is_empty()
    }
}

pub struct Store {
    conn: Connection,
}

fn digest_from(blob: Vec<u8>) -> Result<Digest, StoreError> {
    blob.try_into()
        .map_err(|_| StoreError::Corrupt("intermediate hash is not 32 bytes".into()))
}

fn c_p_from(v: i64) -> Result<u64, StoreError> {
    u64::try_from(v).map_err(|_| StoreError::Corrupt("negative prune count".into()))
}

/// id, name, head, prune point, prune count.
type ListRow = (i64, String, Option<Vec<u8>>, Option<i32>, i64);

impl Store {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "FULL")?;
        Self::init(conn)
    }

    pub fn in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn })
    }

    fn row_to_list(row: &rusqlite::Row<'_>) -> rusqlite::Result<ListRow> {
        Ok((row.get(0)?, row.get(1)?, row.get(2)?, row.get(3)?, row.get(4)?))
    }

    fn to_stored(
        (id, name, owner_pk, t_p, c_p): (i64, String, Option<Vec<u8>>, Option<i32>, i64),
    ) -> Result<StoredList, StoreError> {
        Ok(StoredList {
            id,
            info: ListInfo {
                name,
                owner_pk,
                prune_point: t_p.map(Timestamp),
                prune_count: c_p_from(c_p)?,
            },
        })
    }

    pub fn list(&self, name: &str) -> Result<Option<StoredList>, StoreError> {
        self.conn
            .query_row(
                "SELECT list_id, name, owner_pk, t_p, c_p FROM lists WHERE name = ?1",
                [name],
                Self::row_to_list,
            )
            .optional()?
            .map(Self::to_stored)
            .transpose()
    }

    /// All lists ordered by name (byte order, as the Merkle tree sorts).
    pub fn lists(&self) -> Result<Vec<StoredList>, StoreError> {
        let mut stmt = self
            .conn
            .prepare_cached("SELECT list_id, name, owner_pk, t_p, c_p FROM lists ORDER BY name")?;
        let rows = stmt.query_map([], Self::row_to_list)?;
        rows.map(|r| Self::to_stored(r?)).collect()
    }

    pub fn list_count(&self) -> Result<usize, StoreError> {
        let n: i64 = self
            .conn
            .query_row("SELECT COUNT(*) FROM lists", [], |r| r.get(0))?;
        Ok(n as usize)
    }

    pub fn chain(&self, list_id: i64) -> Result<Vec<ChainEntry>, StoreError> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT ts, intermediate_hash FROM timestamps WHERE list_id = ?1 ORDER BY ts",
        )?;
        let rows = stmt.query_map([list_id], |r| Ok((r.get::<_, i32>(0)?, r.get::<_, Vec<u8>>(1)?)))?;
        rows.map(|r| {
            let (ts, h) = r?;
            Ok(ChainEntry {
                ts: Timestamp(ts),
                hash: digest_from(h)?,
            })
        })
        .collect()
    }

    pub fn head(&self, list_id: i64) -> Result<Option<Digest>, StoreError> {
        self.conn
            .prepare_cached(
                "SELECT intermediate_hash FROM timestamps WHERE list_id = ?1 ORDER BY ts DESC LIMIT 1",
            )?
            .query_row([list_id], |r| r.get::<_, Vec<u8>>(0))
            .optional()?
            .map(digest_from)
            .transpose()
    }

    pub fn final_hash(&self, list: &StoredList) -> Result<Digest, StoreError> {
        Ok(final_hash(self.head(list.id)?.as_ref(), &list.info)?)
    }

    /// Every list's `(name, final hash)`, sorted by name.
    pub fn leaves(&self) -> Result<Vec<MerkleLeaf>, StoreError> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT l.list_id, l.name, l.owner_pk, l.t_p, l.c_p,
                    (SELECT intermediate_hash FROM timestamps t
                      WHERE t.list_id = l.list_id ORDER BY ts DESC LIMIT 1)
               FROM lists l ORDER BY l.name",
        )?;
        let rows = stmt.query_map([], |r| Ok((Self::row_to_list(r)?, r.get::<_, Option<Vec<u8>>>(5)?)))?;
        rows.map(|r| {
            let (list, head) = r?;
            let list = Self::to_stored(list)?;
            let head = head.map(digest_from).transpose()?;
            Ok(MerkleLeaf::new(
                list.info.name.clone(),
                final_hash(head.as_ref(), &list.info)?,
            ))
        })
        .collect()
    }

    /// The rows a window starting at `t_s` needs.
    pub fn range(&self, list_id: i64, t_s: Timestamp) -> Result<RangeRows, StoreError> {
        let mut before = self.conn.prepare_cached(
            "SELECT ts, intermediate_hash FROM timestamps
              WHERE list_id = ?1 AND ts < ?2 ORDER BY ts DESC LIMIT 2",
        )?;
        let mut below: Vec<ChainEntry> = before
            .query_map(params![list_id, t_s.0], |r| {
                Ok((r.get::<_, i32>(0)?, r.get::<_, Vec<u8>>(1)?))
            })?
            .map(|r| {
                let (ts, h) = r?;
                Ok(ChainEntry {
                    ts: Timestamp(ts),
                    hash: digest_from(h)?,
                })
            })
            .collect::<Result<_, StoreError>>()?;
        let before_boundary = below.get(1).copied();
        let boundary = below.drain(..).next();

        let mut stmt = self.conn.prepare_cached(
            "SELECT ts, intermediate_hash FROM timestamps
              WHERE list_id = ?1 AND ts >= ?2 ORDER BY ts",
        )?;
        let in_range = stmt
            .query_map(params![list_id, t_s.0], |r| {
                Ok((r.get::<_, i32>(0)?, r.get::<_, Vec<u8>>(1)?))
            })?
            .map(|r| {
                let (ts, h) = r?;
                Ok(ChainEntry {
                    ts: Timestamp(ts),
                    hash: digest_from(h)?,
                })
            })
            .collect::<Result<_, StoreError>>()?;
        Ok(RangeRows {
            before_boundary,
            boundary,
            in_range,
        })
    }

    /// Timestamps strictly before `before`, ascending.
    pub fn timestamps_before(&self, list_id: i64, before: Timestamp) -> Result<Vec<Timestamp>, StoreError> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT ts FROM timestamps WHERE list_id = ?1 AND ts < ?2 ORDER BY ts",
        )?;
        let rows = stmt.query_map(params![list_id, before.0], |r| r.get::<_, i32>(0))?;
        rows.map(|r| Ok(Timestamp(r?))).collect()
    }

    /// Writes an enclave update. Re-applying the same update is a no-op.
    pub fn apply_update(&mut self, update: &ListUpdate) -> Result<(), StoreError> {
        let tx = self.conn.transaction()?;
        let info = &update.info;
        tx.execute(
            "INSERT INTO lists (name, owner_pk, t_p, c_p) VALUES (?1, ?2, ?3, ?4)
             ON CONFLICT(name) DO UPDATE SET owner_pk = ?2, t_p = ?3, c_p = ?4",
            params![
                info.name,
                info.owner_pk,
                info.prune_point.map(|t| t.0),
                info.prune_count as i64
            ],
        )?;
        let id: i64 = tx.query_row(
            "SELECT list_id FROM lists WHERE name = ?1",
            [&info.name],
            |r| r.get(0),
        )?;
        {
            let mut insert = tx.prepare_cached(
                "INSERT OR REPLACE INTO timestamps (list_id, ts, intermediate_hash) VALUES (?1, ?2, ?3)",
            )?;
            if let Some(chain) = &update.rebuilt {
                tx.execute("DELETE FROM timestamps WHERE list_id = ?1", [id])?;
                for e in chain {
                    insert.execute(params![id, e.ts.0, e.hash.as_slice()])?;
                }
            } else if let Some(e) = &update.appended {
                insert.execute(params![id, e.ts.0, e.hash.as_slice()])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    /// Drops every list, e.g. after re-provisioning with an empty tree.
    pub fn clear(&mut self) -> Result<(), StoreError> {
        self.conn
            .execute_batch("DELETE FROM timestamps; DELETE FROM lists;")?;
        Ok(())
    }

    /// Inserts a whole list with its chain in one transaction and returns its
    /// final hash. Used to seed large stores without producing proofs.
    pub fn insert_list(&mut self, info: &ListInfo, timestamps: &[Timestamp]) -> Result<Digest, StoreError> {
        let chain = build_chain(None, timestamps);
        let update = ListUpdate {
            info: info.clone(),
            final_hash: final_hash(chain.last().map(|e| &e.hash), info)?,
            is_new: true,
            appended: None,
            rebuilt: Some(chain),
            count: 0,
        };
        self.apply_update(&update)?;
        Ok(update.final_hash)
    }

    /// Recomputes every chain from raw timestamps and compares each stored
    /// intermediate hash.
    pub fn audit(&self) -> Result<AuditReport, StoreError> {
        let mut report = AuditReport::default();
        for list in self.lists()? {
            report.lists += 1;
            let chain = self.chain(list.id)?;
            report.timestamps += chain.len();
            let raw: Vec<Timestamp> = chain.iter().map(|e| e.ts).collect();
            for (stored, fresh) in chain.iter().zip(build_chain(None, &raw)) {
                if stored.hash != fresh.hash {
                    report.bad_rows.push((list.info.name.clone(), stored.ts));
                }
            }
        }
        Ok(report)
    }

    /// Raw access for adversarial tests that tamper with the host's data.
    pub fn connection(&self) -> &Connection {
        &self.conn
    }
}
