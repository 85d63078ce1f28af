//! Picks exactly the rows `get_rate` needs out of the store.

use crate::hashchain::{chain_extend, RangeEvidence, Timestamp};
use crate::mht::MerkleTree;
use crate::tee::{Evidence, ExistingList, RateProofRequest, GLOBAL_LIST};

use super::store::{Store, StoreError, StoredList};

/// Builds the evidence for `req`.
///
/// For a known list: the largest timestamp before `t_s`, the chain value
/// before it, every timestamp from `t_s` on, the final hash and an inclusion
/// proof. A request that will prune also sends every older timestamp, since
/// the enclave must rebuild the chain. For an unknown list: all leaves.
///
/// With `recheck`, the stored intermediate hashes of the fetched rows are
/// recomputed first and a mismatch is reported as corruption.
pub fn assemble_evidence(
    store: &Store,
    tree: &MerkleTree,
    req: &RateProofRequest,
    recheck: bool,
) -> Result<Evidence, StoreError> {
    let Some(list) = store.list(&req.list_name)? else {
        return Ok(Evidence::New {
            leaves: tree.leaves().to_vec(),
        });
    };
    let prunes = req.list_name != GLOBAL_LIST
        && req
            .prune_point
            .is_some_and(|tp| list.info.prune_point.is_none_or(|cur| tp > cur));
    existing(store, tree, &list, req.t_s, prunes, recheck).map(Evidence::Existing)
}

/// Evidence for a known list; `full` sends the whole chain.
pub(crate) fn existing(
    store: &Store,
    tree: &MerkleTree,
    list: &StoredList,
    t_s: Timestamp,
    full: bool,
    recheck: bool,
) -> Result<ExistingList, StoreError> {
    let rows = store.range(list.id, t_s)?;
    let older = match (&rows.boundary, full) {
        (Some(b), true) => store.timestamps_before(list.id, b.ts)?,
        _ => Vec::new(),
    };
    let prefix_head = if full {
        None
    } else {
        rows.before_boundary.map(|e| e.hash)
    };

    if recheck {
        let mut head = rows.before_boundary.map(|e| e.hash);
        for entry in rows.boundary.iter().chain(&rows.in_range) {
            // Without a row before the boundary, the boundary opens the chain.
            let expected = chain_extend(head.as_ref(), entry.ts);
            if expected != entry.hash {
                return Err(StoreError::Corrupt(format!(
                    "list {:?}: intermediate hash at {} does not match",
                    list.info.name, entry.ts
                )));
            }
            head = Some(entry.hash);
        }
    }

    let final_hash = match rows.in_range.last().or(rows.boundary.as_ref()) {
        Some(last) => crate::hashchain::final_hash(Some(&last.hash), &list.info)?,
        None => crate::hashchain::final_hash(None, &list.info)?,
    };
    let proof = tree
        .prove(&list.info.name)
        .map_err(|e| StoreError::Corrupt(e.to_string()))?;
    Ok(ExistingList {
        info: list.info.clone(),
        final_hash,
        range: RangeEvidence {
            prefix_head,
            boundary: rows.boundary.map(|e| e.ts),
            in_range: rows.in_range.iter().map(|e| e.ts).collect(),
        },
        older,
        proof,
    })
}
