//! Membership proofs over the redacted hash tree.
//!
//! Every redacted hash has the shape `H(head..., child0, ..., childN)`. A proof
//! carries the target's preimage (or just its digest) and, for each ancestor
//! up to the root, the ancestor's head segments, the target's position and
//! the other children's hashes.

use std::collections::BTreeMap;

use crate::encoding::{hash_segments, put_varbytes, put_varint, DecodeError, Hash256, Reader};
use crate::policy::PathSelector;
use crate::sbom::NodeId;

use super::redacted::{redacted_pass, RedactedHashes, RedactedSbomNode};
use super::MerkleError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProofTarget {
    /// Full preimage; the last head segment is the node's plaintext hash.
    Node { head: Vec<Vec<u8>>, children: Vec<Hash256> },
    /// Bare digest, e.g. the merkle root of an embedded SBOM.
    Digest(Hash256),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofStep {
    pub head: Vec<Vec<u8>>,
    pub position: u32,
    /// Hashes of the other children, in order, with the target's slot removed.
    pub siblings: Vec<Hash256>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MembershipProof {
    pub target: ProofTarget,
    /// From the target's parent up to the root.
    pub path: Vec<ProofStep>,
    pub root: Hash256,
}

fn hash_node(head: &[Vec<u8>], children: &[Hash256]) -> Hash256 {
    hash_segments(head.iter().map(Vec::as_slice).chain(children.iter().map(AsRef::as_ref)))
}

impl ProofTarget {
    pub fn digest(&self) -> Hash256 {
        match self {
            ProofTarget::Node { head, children } => hash_node(head, children),
            ProofTarget::Digest(h) => *h,
        }
    }
}

impl MembershipProof {
    /// Plaintext hash of the target, when the full preimage is present.
    pub fn target_plain_hash(&self) -> Option<Hash256> {
        match &self.target {
            ProofTarget::Node { head, .. } => {
                head.last().and_then(|h| <[u8; 32]>::try_from(h.as_slice()).ok()).map(Hash256)
            }
            ProofTarget::Digest(_) => None,
        }
    }

    /// Recomputes the root implied by the proof.
    pub fn implied_root(&self) -> Option<Hash256> {
        let mut cur = self.target.digest();
        for step in &self.path {
            let pos = step.position as usize;
            if pos > step.siblings.len() {
                return None;
            }
            let mut children = step.siblings.clone();
            children.insert(pos, cur);
            cur = hash_node(&step.head, &children);
        }
        Some(cur)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        fn put_head(out: &mut Vec<u8>, head: &[Vec<u8>]) {
            put_varint(out, head.len() as u64);
            for seg in head {
                put_varbytes(out, seg);
            }
        }
        fn put_hashes(out: &mut Vec<u8>, hs: &[Hash256]) {
            put_varint(out, hs.len() as u64);
            for h in hs {
                out.extend_from_slice(h.as_bytes());
            }
        }
        let mut out = Vec::new();
        match &self.target {
            ProofTarget::Node { head, children } => {
                out.push(0);
                put_head(&mut out, head);
                put_hashes(&mut out, children);
            }
            ProofTarget::Digest(h) => {
                out.push(1);
                out.extend_from_slice(h.as_bytes());
            }
        }
        put_varint(&mut out, self.path.len() as u64);
        for step in &self.path {
            put_head(&mut out, &step.head);
            put_varint(&mut out, u64::from(step.position));
            put_hashes(&mut out, &step.siblings);
        }
        out.extend_from_slice(self.root.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        fn count(r: &mut Reader<'_>) -> Result<usize, DecodeError> {
            let n = r.varint()? as usize;
            if n > r.remaining() {
                return Err(DecodeError::Truncated);
            }
            Ok(n)
        }
        fn head(r: &mut Reader<'_>) -> Result<Vec<Vec<u8>>, DecodeError> {
            let n = count(r)?;
            (0..n).map(|_| r.varbytes().map(<[u8]>::to_vec)).collect()
        }
        fn hashes(r: &mut Reader<'_>) -> Result<Vec<Hash256>, DecodeError> {
            let n = count(r)?;
            (0..n).map(|_| r.hash()).collect()
        }
        let mut r = Reader::new(bytes);
        let target = match r.u8()? {
            0 => ProofTarget::Node { head: head(&mut r)?, children: hashes(&mut r)? },
            1 => ProofTarget::Digest(r.hash()?),
            _ => return Err(DecodeError::Invalid("proof target")),
        };
        let n = count(&mut r)?;
        let mut path = Vec::with_capacity(n);
        for _ in 0..n {
            let head = head(&mut r)?;
            let position = u32::try_from(r.varint()?).map_err(|_| DecodeError::Invalid("position"))?;
            path.push(ProofStep { head, position, siblings: hashes(&mut r)? });
        }
        let root = r.hash()?;
        r.finish()?;
        Ok(MembershipProof { target, path, root })
    }
}

/// True iff the proof recomputes exactly `root`.
pub fn verify_membership(proof: &MembershipProof, root: &Hash256) -> bool {
    proof.root == *root && proof.implied_root().as_ref() == Some(root)
}

/// Proof for the node at `id`, built from precomputed hashes.
pub fn proof_from_hashes(hashes: &RedactedHashes, id: &NodeId, digest_only: bool) -> Result<MembershipProof, MerkleError> {
    let node = hashes.nodes.get(id).ok_or(MerkleError::NodeNotFound)?;
    let children_of = |parent: &NodeId| -> Vec<Hash256> {
        (0..)
            .map_while(|i| hashes.nodes.get(&parent.child(i)).map(|d| d.redacted))
            .collect()
    };
    let target = if digest_only {
        ProofTarget::Digest(node.redacted)
    } else {
        ProofTarget::Node { head: node.head.clone(), children: children_of(id) }
    };
    let mut path = Vec::with_capacity(id.depth());
    let mut cur = id.clone();
    while let Some(pos) = cur.0.pop() {
        let parent = &hashes.nodes[&cur];
        let mut siblings = children_of(&cur);
        siblings.remove(pos as usize);
        path.push(ProofStep { head: parent.head.clone(), position: pos, siblings });
    }
    Ok(MembershipProof { target, path, root: hashes.merkle_root })
}

pub fn prove_membership_at(root: &RedactedSbomNode, id: &NodeId) -> Result<MembershipProof, MerkleError> {
    proof_from_hashes(&redacted_pass(root)?, id, false)
}

/// Finds the single node matched by `selector` and proves it. Names of
/// redacted nodes are taken from `known_names` (e.g. after decryption);
/// unnamed redacted nodes only match wildcards.
pub fn prove_membership(
    root: &RedactedSbomNode,
    selector: &PathSelector,
    known_names: &BTreeMap<NodeId, String>,
) -> Result<MembershipProof, MerkleError> {
    let hits = select_nodes(root, selector, known_names);
    match hits.len() {
        0 => Err(MerkleError::NodeNotFound),
        1 => prove_membership_at(root, &hits[0]),
        n => Err(MerkleError::AmbiguousPath(n)),
    }
}

/// Every node whose path matches `selector`.
pub fn select_nodes(
    root: &RedactedSbomNode,
    selector: &PathSelector,
    known_names: &BTreeMap<NodeId, String>,
) -> Vec<NodeId> {
    const UNKNOWN: &str = "\u{0}";
    let mut names: BTreeMap<NodeId, String> = BTreeMap::new();
    let mut hits = Vec::new();
    root.walk(|id, node, _| {
        let name = known_names
            .get(id)
            .cloned()
            .or_else(|| node.public_name())
            .unwrap_or_else(|| UNKNOWN.to_owned());
        names.insert(id.clone(), name);
        let path: Vec<&str> = (0..=id.depth()).map(|d| names[&NodeId(id.0[..d].to_vec())].as_str()).collect();
        if selector.matches(&path) {
            hits.push(id.clone());
        }
    });
    hits
}
