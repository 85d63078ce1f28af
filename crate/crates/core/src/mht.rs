//! Merkle hash tree over the lists' final hashes.
//!
//! Leaves are kept sorted by list name. Leaf nodes are `SHA256(0x00 || F)`,
//! internal nodes `SHA256(0x01 || left || right)`. A node without a sibling
//! is promoted unchanged to the next level. The empty tree has an all-zero
//! root.

use thiserror::Error;

use crate::digest::{sha256, Digest, ZERO_DIGEST};

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MhtError {
    #[error("leaves are not strictly sorted by name (at index {0})")]
    InvalidLeaves(usize),
    #[error("list {0:?} is not in the tree")]
    NameNotFound(String),
    #[error("list {0:?} is already in the tree")]
    DuplicateName(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MerkleLeaf {
    pub list_name: String,
    pub final_hash: Digest,
}

impl MerkleLeaf {
    pub fn new(list_name: impl Into<String>, final_hash: Digest) -> Self {
        Self {
            list_name: list_name.into(),
            final_hash,
        }
    }
}

/// Position of a sibling relative to the node being folded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InclusionProof {
    pub leaf_index: u64,
    pub siblings: Vec<(Side, Digest)>,
}

pub fn leaf_node(final_hash: &Digest) -> Digest {
    sha256(&[&[LEAF_PREFIX], final_hash])
}

pub fn internal_node(left: &Digest, right: &Digest) -> Digest {
    sha256(&[&[NODE_PREFIX], left, right])
}

fn check_sorted(leaves: &[MerkleLeaf]) -> Result<(), MhtError> {
    match leaves
        .windows(2)
        .position(|w| w[0].list_name >= w[1].list_name)
    {
        Some(i) => Err(MhtError::InvalidLeaves(i + 1)),
        None => Ok(()),
    }
}

/// A fully materialised tree: every level is cached so proofs and single-leaf
/// updates cost `O(log s)` hashes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MerkleTree {
    leaves: Vec<MerkleLeaf>,
    // levels[0] are the leaf nodes; the last level holds the root.
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    pub fn build(leaves: Vec<MerkleLeaf>) -> Result<Self, MhtError> {
        check_sorted(&leaves)?;
        let mut tree = Self {
            leaves,
            levels: Vec::new(),
        };
        tree.rebuild();
        Ok(tree)
    }

    fn rebuild(&mut self) {
        self.levels.clear();
        if self.leaves.is_empty() {
            return;
        }
        let mut level: Vec<Digest> = self
            .leaves
            .iter()
            .map(|l| leaf_node(&l.final_hash))
            .collect();
        while level.len() > 1 {
            let next = level
                .chunks(2)
                .map(|pair| match pair {
                    [l, r] => internal_node(l, r),
                    [only] => *only,
                    _ => unreachable!(),
                })
                .collect();
            self.levels.push(std::mem::replace(&mut level, next));
        }
        self.levels.push(level);
    }

    pub fn root(&self) -> Digest {
        self.levels
            .last()
            .map(|top| top[0])
            .unwrap_or(ZERO_DIGEST)
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn leaves(&self) -> &[MerkleLeaf] {
        &self.leaves
    }

    pub fn into_leaves(self) -> Vec<MerkleLeaf> {
        self.leaves
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.leaves
            .binary_search_by(|l| l.list_name.as_str().cmp(name))
            .ok()
    }

    pub fn get(&self, name: &str) -> Option<&MerkleLeaf> {
        self.position(name).map(|i| &self.leaves[i])
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    pub fn prove(&self, name: &str) -> Result<InclusionProof, MhtError> {
        let index = self
            .position(name)
            .ok_or_else(|| MhtError::NameNotFound(name.to_owned()))?;
        Ok(self.prove_index(index))
    }

    pub fn prove_index(&self, index: usize) -> InclusionProof {
        let mut siblings = Vec::new();
        let mut i = index;
        for level in &self.levels[..self.levels.len().saturating_sub(1)] {
            let sibling = i ^ 1;
            if sibling < level.len() {
                let side = if sibling < i { Side::Left } else { Side::Right };
                siblings.push((side, level[sibling]));
            }
            i /= 2;
        }
        InclusionProof {
            leaf_index: index as u64,
            siblings,
        }
    }

    /// Replaces one leaf's final hash, rehashing only its path.
    pub fn update(&mut self, name: &str, final_hash: Digest) -> Result<(), MhtError> {
        let index = self
            .position(name)
            .ok_or_else(|| MhtError::NameNotFound(name.to_owned()))?;
        self.leaves[index].final_hash = final_hash;
        self.levels[0][index] = leaf_node(&final_hash);
        let mut i = index;
        for depth in 1..self.levels.len() {
            i /= 2;
            let below = &self.levels[depth - 1];
            let (l, r) = (2 * i, 2 * i + 1);
            let node = if r < below.len() {
                internal_node(&below[l], &below[r])
            } else {
                below[l]
            };
            self.levels[depth][i] = node;
        }
        Ok(())
    }

    /// Adds a new leaf at its sorted position and rebuilds the tree.
    pub fn insert(&mut self, leaf: MerkleLeaf) -> Result<(), MhtError> {
        match self
            .leaves
            .binary_search_by(|l| l.list_name.cmp(&leaf.list_name))
        {
            Ok(_) => Err(MhtError::DuplicateName(leaf.list_name)),
            Err(pos) => {
                self.leaves.insert(pos, leaf);
                self.rebuild();
                Ok(())
            }
        }
    }
}

pub fn build(leaves: &[MerkleLeaf]) -> Result<Digest, MhtError> {
    Ok(MerkleTree::build(leaves.to_vec())?.root())
}

pub fn prove(leaves: &[MerkleLeaf], name: &str) -> Result<InclusionProof, MhtError> {
    MerkleTree::build(leaves.to_vec())?.prove(name)
}

/// Folds the leaf node through the siblings; `len(siblings) + 1` hashes.
pub fn verify_inclusion(root: &Digest, final_hash: &Digest, proof: &InclusionProof) -> bool {
    let mut node = leaf_node(final_hash);
    for (side, sibling) in &proof.siblings {
        node = match side {
            Side::Left => internal_node(sibling, &node),
            Side::Right => internal_node(&node, sibling),
        };
    }
    node == *root
}

/// Binary search over leaves sorted by name.
pub fn contains_name(leaves: &[MerkleLeaf], name: &str) -> bool {
    leaves
        .binary_search_by(|l| l.list_name.as_str().cmp(name))
        .is_ok()
}
