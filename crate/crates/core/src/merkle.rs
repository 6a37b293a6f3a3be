//! Binary Merkle tree over receipt encodings.
//!
//! Leaves hash as `H(0x00 || leaf)`, interior nodes as `H(0x01 || left || right)`.
//! An odd node at the end of a level is promoted to the next level unchanged.
//! The root of an empty list is `H("")`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{sha256, Digest};

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MerkleError {
    #[error("leaf index {index} out of range for {len} leaves")]
    IndexOutOfRange { index: usize, len: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiptProof {
    pub leaf_index: u64,
    /// Sibling hashes from the leaf level upwards, with the side the sibling sits on.
    pub siblings: Vec<(Digest, Side)>,
    pub declared_root: Digest,
}

pub fn empty_root() -> Digest {
    sha256(&[])
}

pub fn leaf_hash(leaf: &[u8]) -> Digest {
    let mut buf = Vec::with_capacity(leaf.len() + 1);
    buf.push(LEAF_PREFIX);
    buf.extend_from_slice(leaf);
    sha256(&buf)
}

pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    let mut buf = [0u8; 65];
    buf[0] = NODE_PREFIX;
    buf[1..33].copy_from_slice(&left.0);
    buf[33..].copy_from_slice(&right.0);
    sha256(&buf)
}

fn next_level(level: &[Digest]) -> Vec<Digest> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => node_hash(l, r),
            [single] => *single,
            _ => unreachable!(),
        })
        .collect()
}

pub fn build_root<L: AsRef<[u8]>>(leaves: &[L]) -> Digest {
    if leaves.is_empty() {
        return empty_root();
    }
    let mut level: Vec<Digest> = leaves.iter().map(|l| leaf_hash(l.as_ref())).collect();
    while level.len() > 1 {
        level = next_level(&level);
    }
    level[0]
}

pub fn prove<L: AsRef<[u8]>>(leaves: &[L], index: usize) -> Result<ReceiptProof, MerkleError> {
    if index >= leaves.len() {
        return Err(MerkleError::IndexOutOfRange { index, len: leaves.len() });
    }
    let mut level: Vec<Digest> = leaves.iter().map(|l| leaf_hash(l.as_ref())).collect();
    let mut pos = index;
    let mut siblings = Vec::new();
    while level.len() > 1 {
        let sibling = pos ^ 1;
        if sibling < level.len() {
            let side = if sibling < pos { Side::Left } else { Side::Right };
            siblings.push((level[sibling], side));
        }
        level = next_level(&level);
        pos /= 2;
    }
    Ok(ReceiptProof { leaf_index: index as u64, siblings, declared_root: level[0] })
}

/// Folds `leaf` through the proof's siblings and compares with `root`.
pub fn verify(root: &Digest, leaf: &[u8], proof: &ReceiptProof) -> bool {
    if proof.declared_root != *root {
        return false;
    }
    let folded = proof.siblings.iter().fold(leaf_hash(leaf), |acc, (sib, side)| match side {
        Side::Left => node_hash(sib, &acc),
        Side::Right => node_hash(&acc, sib),
    });
    folded == *root
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Recursive level-by-level construction on explicit pairs, sharing no
    /// helpers with the implementation.
    fn oracle_root(leaves: &[Vec<u8>]) -> Digest {
        fn level_up(nodes: Vec<Digest>) -> Digest {
            if nodes.len() == 1 {
                return nodes[0];
            }
            let mut up = Vec::new();
            let mut i = 0;
            while i < nodes.len() {
                if i + 1 < nodes.len() {
                    let mut b = vec![1u8];
                    b.extend_from_slice(&nodes[i].0);
                    b.extend_from_slice(&nodes[i + 1].0);
                    up.push(sha256(&b));
                } else {
                    up.push(nodes[i]);
                }
                i += 2;
            }
            level_up(up)
        }
        if leaves.is_empty() {
            return sha256(b"");
        }
        level_up(
            leaves
                .iter()
                .map(|l| {
                    let mut b = vec![0u8];
                    b.extend_from_slice(l);
                    sha256(&b)
                })
                .collect(),
        )
    }

    /// Sibling count for `index` among `n` leaves under promotion, by walking levels.
    fn oracle_path_len(mut n: usize, mut index: usize) -> usize {
        let mut count = 0;
        while n > 1 {
            if (index ^ 1) < n {
                count += 1;
            }
            n = n.div_ceil(2);
            index /= 2;
        }
        count
    }

    fn leaves(n: usize) -> Vec<Vec<u8>> {
        (0..n).map(|i| format!("receipt-{i}").into_bytes()).collect()
    }

    #[test]
    fn empty_and_single_leaf() {
        assert_eq!(build_root::<Vec<u8>>(&[]), empty_root());
        assert_eq!(build_root(&[b"x".to_vec()]), leaf_hash(b"x"));
        let p = prove(&[b"x".to_vec()], 0).unwrap();
        assert!(p.siblings.is_empty());
        assert!(verify(&leaf_hash(b"x"), b"x", &p));
    }

    #[test]
    fn roots_match_recursive_oracle() {
        for n in 0..=17 {
            let l = leaves(n);
            assert_eq!(build_root(&l), oracle_root(&l), "n = {n}");
        }
    }

    #[test]
    fn perfect_tree_has_two_siblings() {
        let l = leaves(4);
        for i in 0..4 {
            assert_eq!(prove(&l, i).unwrap().siblings.len(), 2);
        }
    }

    #[test]
    fn five_leaves_last_index_is_promoted_twice() {
        let l = leaves(5);
        let p = prove(&l, 4).unwrap();
        assert_eq!(p.siblings.len(), oracle_path_len(5, 4));
        assert_eq!(p.siblings.len(), 1);
        assert!(verify(&build_root(&l), &l[4], &p));
    }

    #[test]
    fn path_lengths_match_oracle() {
        for n in 1..=20 {
            let l = leaves(n);
            for i in 0..n {
                let p = prove(&l, i).unwrap();
                assert_eq!(p.siblings.len(), oracle_path_len(n, i));
                assert!(p.siblings.len() <= (n as f64).log2().ceil() as usize);
            }
        }
    }

    #[test]
    fn proof_for_wrong_leaf_never_verifies() {
        for n in 1..=8 {
            let l = leaves(n);
            let root = build_root(&l);
            for i in 0..n {
                let p = prove(&l, i).unwrap();
                for (j, leaf) in l.iter().enumerate() {
                    assert_eq!(verify(&root, leaf, &p), i == j, "n={n} i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn out_of_range_index() {
        assert_eq!(prove(&leaves(3), 3), Err(MerkleError::IndexOutOfRange { index: 3, len: 3 }));
    }

    #[test]
    fn interior_node_is_not_a_leaf() {
        let l = leaves(4);
        let root = build_root(&l);
        let a = node_hash(&leaf_hash(&l[0]), &leaf_hash(&l[1]));
        let b = node_hash(&leaf_hash(&l[2]), &leaf_hash(&l[3]));
        assert_eq!(node_hash(&a, &b), root);
        let mut forged = a.0.to_vec();
        forged.extend_from_slice(&b.0);
        let empty = ReceiptProof { leaf_index: 0, siblings: vec![], declared_root: root };
        assert!(!verify(&root, &forged, &empty));
        // Presenting the left interior node's preimage one level down also fails.
        let mut left_pre = leaf_hash(&l[0]).0.to_vec();
        left_pre.extend_from_slice(&leaf_hash(&l[1]).0);
        let p = ReceiptProof { leaf_index: 0, siblings: vec![(b, Side::Right)], declared_root: root };
        assert!(!verify(&root, &left_pre, &p));
    }

    #[test]
    fn mismatched_declared_root_fails() {
        let l = leaves(3);
        let mut p = prove(&l, 1).unwrap();
        p.declared_root = Digest([9; 32]);
        assert!(!verify(&build_root(&l), &l[1], &p));
    }
}
