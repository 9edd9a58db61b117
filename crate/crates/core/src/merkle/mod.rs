//! Two Merkle passes over an SBOM tree.
//!
//! The plaintext pass hashes salted commitments to each node's payload:
//!
//! ```text
//! field    h = Commit(lp(name) || lp(value))
//! complex  h = H(Commit(lp(type)), h_child0, ..., h_childN)
//! sbom     h = H(Commit(lp(index) || lp(doc_meta)), h_child0, ..., h_childN)
//! ```
//!
//! The redacted pass (see [`redacted_pass`]) hashes the redacted tree,
//! binding each node's access tree, ciphertext and plaintext hash. `H(a, b)`
//! always means SHA-256 over 4-byte big-endian length-prefixed segments.

mod proof;
mod redacted;
mod sameness;

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::encoding::{hash_segments, DecodeError, Hash256};
use crate::sbom::{NodeId, NodeRef, SbomTree};

pub use proof::{
    proof_from_hashes, prove_membership, prove_membership_at, select_nodes, verify_membership, MembershipProof,
    ProofStep, ProofTarget,
};
pub use redacted::{
    public_salt, redacted_pass, Attestation, Body, NodeDigest, RedactedHashes, RedactedNode, RedactedRef,
    RedactedSbom, RedactedSbomNode, Sealed, MARKER_PUBLIC, MARKER_REDACTED,
};
pub(crate) use sameness::verify_opened_with;
pub use sameness::{verify_opened, verify_sameness, NodeVerdict, Opened, SamenessReport, EMBEDDED_PLACEHOLDER};

pub type Salt = [u8; 32];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MerkleError {
    #[error("no salt for node {0}")]
    SaltMissing(NodeId),
    #[error("node {node} references key slot {slot}, which does not exist")]
    DanglingSlot { node: NodeId, slot: u32 },
    #[error("no node matches the selector")]
    NodeNotFound,
    #[error("selector matches {0} nodes, expected exactly one")]
    AmbiguousPath(usize),
    #[error("malformed public payload at node {0}")]
    MalformedPayload(NodeId),
    #[error("malformed redacted tree: {0}")]
    Decode(#[from] DecodeError),
}

/// A salted hash commitment, `digest = H(salt, data)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Commitment {
    pub salt: Salt,
    pub digest: Hash256,
}

pub fn commit(data: &[u8], salt: &Salt) -> Commitment {
    Commitment { salt: *salt, digest: hash_segments([salt.as_slice(), data]) }
}

impl Commitment {
    /// Checks an opening `(salt, data)` of this commitment.
    pub fn opens_to(&self, data: &[u8], salt: &Salt) -> bool {
        commit(data, salt).digest == self.digest
    }
}

/// Plaintext hash of one node from its payload, salt and child plaintext
/// hashes. Field nodes are the bare commitment.
pub fn plain_node_hash(is_field: bool, payload: &[u8], salt: &Salt, children: &[Hash256]) -> Hash256 {
    let c = commit(payload, salt).digest;
    if is_field {
        return c;
    }
    hash_segments(std::iter::once(c.as_ref()).chain(children.iter().map(AsRef::as_ref)))
}

/// Draws a fresh salt for every node and runs the plaintext pass.
pub fn plain_pass<R: RngCore + CryptoRng>(
    tree: &SbomTree,
    rng: &mut R,
) -> (BTreeMap<NodeId, Hash256>, BTreeMap<NodeId, Salt>) {
    let mut salts = BTreeMap::new();
    tree.walk(|v| {
        let mut s = [0u8; 32];
        rng.fill_bytes(&mut s);
        salts.insert(v.id.clone(), s);
    });
    let hashes = plain_hashes(tree, |id| salts.get(id).copied(), &BTreeMap::new())
        .expect("every node was given a salt");
    (hashes, salts)
}

/// Plaintext pass with caller-chosen salts. Nodes listed in `opaque` take the
/// given hash instead of being hashed from their content; composition uses
/// this for embedded SBOMs whose plaintext is not available.
pub fn plain_hashes(
    tree: &SbomTree,
    salt_of: impl Fn(&NodeId) -> Option<Salt>,
    opaque: &BTreeMap<NodeId, Hash256>,
) -> Result<BTreeMap<NodeId, Hash256>, MerkleError> {
    fn go(
        node: NodeRef<'_>,
        id: NodeId,
        salt_of: &dyn Fn(&NodeId) -> Option<Salt>,
        opaque: &BTreeMap<NodeId, Hash256>,
        out: &mut BTreeMap<NodeId, Hash256>,
    ) -> Result<Hash256, MerkleError> {
        if let Some(h) = opaque.get(&id) {
            out.insert(id, *h);
            return Ok(*h);
        }
        let children = node
            .children()
            .iter()
            .enumerate()
            .map(|(i, c)| go(NodeRef::from_node(c), id.child(i), salt_of, opaque, out))
            .collect::<Result<Vec<_>, _>>()?;
        let salt = salt_of(&id).ok_or_else(|| MerkleError::SaltMissing(id.clone()))?;
        let h = plain_node_hash(matches!(node, NodeRef::Field(_)), &node.payload(), &salt, &children);
        out.insert(id, h);
        Ok(h)
    }
    let mut out = BTreeMap::new();
    go(NodeRef::Sbom(&tree.root), NodeId::root(), &salt_of, opaque, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::lp_concat;
    use crate::purl::Purl;
    use crate::sbom::{Node, SbomNode, SourceFormat};
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use sha2::{Digest, Sha256};

    fn sha(parts: &[&[u8]]) -> [u8; 32] {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p);
        }
        h.finalize().into()
    }

    fn be(n: usize) -> [u8; 4] {
        (n as u32).to_be_bytes()
    }

    #[test]
    fn commit_matches_manual_encoding() {
        let salt = [0u8; 32];
        let c = commit(b"a", &salt);
        let expected = sha(&[&be(32), &salt, &be(1), b"a"]);
        assert_eq!(c.digest.0, expected);
        assert!(c.opens_to(b"a", &salt));
        assert!(!c.opens_to(b"a", &[1u8; 32]));
        assert!(!c.opens_to(b"b", &salt));
        assert_ne!(commit(b"a", &[1u8; 32]).digest, c.digest);
    }

    fn one_complex_two_fields() -> SbomTree {
        SbomTree::new(
            SbomNode::new(
                Purl::parse("pkg:generic/x@1").unwrap(),
                "format=native",
                vec![Node::complex("package", vec![Node::field("name", "hello"), Node::field("version", "2.10")])],
            ),
            SourceFormat::Native,
        )
    }

    #[test]
    fn plain_pass_against_hand_rolled_oracle() {
        let tree = one_complex_two_fields();
        let salt = |id: &NodeId| Some([id.depth() as u8 * 16 + id.0.last().copied().unwrap_or(0) as u8; 32]);
        let got = plain_hashes(&tree, salt, &BTreeMap::new()).unwrap();

        let s_root = [0u8; 32];
        let s_pkg = [16u8; 32];
        let s_f0 = [32u8; 32];
        let s_f1 = [33u8; 32];
        let commit_of = |salt: &[u8; 32], data: &[u8]| sha(&[&be(32), salt, &be(data.len()), data]);
        let f0 = commit_of(&s_f0, &lp_concat([b"name".as_slice(), b"hello"]));
        let f1 = commit_of(&s_f1, &lp_concat([b"version".as_slice(), b"2.10"]));
        let t = commit_of(&s_pkg, &lp_concat([b"package".as_slice()]));
        let pkg = sha(&[&be(32), &t, &be(32), &f0, &be(32), &f1]);
        let r = commit_of(&s_root, &lp_concat([b"pkg:generic/x@1".as_slice(), b"format=native"]));
        let root = sha(&[&be(32), &r, &be(32), &pkg]);

        assert_eq!(got[&NodeId(vec![0, 0])].0, f0);
        assert_eq!(got[&NodeId(vec![0])].0, pkg);
        assert_eq!(got[&NodeId::root()].0, root);
    }

    #[test]
    fn single_field_is_its_commitment() {
        let salt = [5u8; 32];
        let payload = lp_concat([b"license".as_slice(), b"MIT"]);
        assert_eq!(plain_node_hash(true, &payload, &salt, &[]), commit(&payload, &salt).digest);
    }

    #[test]
    fn child_order_matters() {
        let tree = one_complex_two_fields();
        let mut swapped = tree.clone();
        let Node::Complex(c) = &mut swapped.root.children[0] else { unreachable!() };
        c.children.swap(0, 1);
        let fixed = |_: &NodeId| Some([9u8; 32]);
        let a = plain_hashes(&tree, fixed, &BTreeMap::new()).unwrap();
        let b = plain_hashes(&swapped, fixed, &BTreeMap::new()).unwrap();
        assert_ne!(a[&NodeId(vec![0])], b[&NodeId(vec![0])]);
    }

    #[test]
    fn random_salts_cover_every_node() {
        let tree = one_complex_two_fields();
        let mut rng = StdRng::seed_from_u64(1);
        let (h, s) = plain_pass(&tree, &mut rng);
        assert_eq!(h.len(), 4);
        assert_eq!(s.len(), 4);
        let (h2, _) = plain_pass(&tree, &mut rng);
        assert_ne!(h[&NodeId::root()], h2[&NodeId::root()]);
        assert_eq!(
            plain_hashes(&tree, |_| None, &BTreeMap::new()).unwrap_err(),
            MerkleError::SaltMissing(NodeId(vec![0, 0]))
        );
    }
}
