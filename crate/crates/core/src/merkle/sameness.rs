//! Sameness checks: does the redacted tree commit to this plaintext?

use std::collections::{BTreeMap, BTreeSet};

use crate::encoding::Hash256;
use crate::sbom::{NodeId, NodeRef, SbomTree};

use super::redacted::{redacted_pass, Body, RedactedHashes, RedactedRef, RedactedSbomNode};
use super::{plain_hashes, plain_node_hash, MerkleError, Salt};

/// Name of the placeholder field that stands in for an embedded SBOM in the
/// producer's plaintext tree.
pub const EMBEDDED_PLACEHOLDER: &str = "embedded-root";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeVerdict {
    Match,
    Mismatch,
    /// No plaintext available to check against.
    Unverifiable,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SamenessReport {
    pub verdicts: BTreeMap<NodeId, NodeVerdict>,
}

impl SamenessReport {
    pub fn count(&self, v: NodeVerdict) -> usize {
        self.verdicts.values().filter(|x| **x == v).count()
    }

    pub fn matched(&self) -> usize {
        self.count(NodeVerdict::Match)
    }

    pub fn mismatched(&self) -> usize {
        self.count(NodeVerdict::Mismatch)
    }

    pub fn unverifiable(&self) -> usize {
        self.count(NodeVerdict::Unverifiable)
    }

    pub fn mismatches(&self) -> Vec<NodeId> {
        self.verdicts.iter().filter(|(_, v)| **v == NodeVerdict::Mismatch).map(|(id, _)| id.clone()).collect()
    }

    pub fn is_all_match(&self) -> bool {
        self.verdicts.values().all(|v| *v == NodeVerdict::Match)
    }
}

/// A decrypted node body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Opened {
    pub salt: Salt,
    pub payload: Vec<u8>,
}

/// Compares a full plaintext tree against the redacted tree.
///
/// `salts` must hold the salt of every redacted node; public nodes use their
/// derived salts. Embedded SBOMs may appear in the plaintext as an
/// `embedded-root` placeholder field whose value is the embedded merkle root
/// in hex; they are then taken on trust and their inner nodes reported
/// unverifiable.
pub fn verify_sameness(
    redacted: &RedactedSbomNode,
    plaintext: &SbomTree,
    salts: &BTreeMap<NodeId, Salt>,
) -> Result<SamenessReport, MerkleError> {
    let hashes = redacted_pass(redacted)?;

    let mut opaque = BTreeMap::new();
    plaintext.walk(|v| {
        if let (NodeRef::Field(f), Some(d)) = (v.node, hashes.nodes.get(v.id)) {
            let embedded = redacted.get(v.id).and_then(RedactedRef::as_sbom).is_some();
            if embedded && f.name == EMBEDDED_PLACEHOLDER && f.value == d.redacted.to_hex() {
                opaque.insert(v.id.clone(), d.plain);
            }
        }
    });

    let mut missing = None;
    plaintext.walk(|v| {
        let redacted_here = hashes.nodes.get(v.id).is_some_and(|d| d.public_salt.is_none());
        if missing.is_none() && redacted_here && !opaque.contains_key(v.id) && !salts.contains_key(v.id) {
            missing = Some(v.id.clone());
        }
    });
    if let Some(id) = missing {
        return Err(MerkleError::SaltMissing(id));
    }
    let salt_of = |id: &NodeId| -> Option<Salt> {
        match (salts.get(id), hashes.nodes.get(id)) {
            (Some(s), _) => Some(*s),
            (None, Some(d)) => d.public_salt,
            // absent from the redacted tree: any salt, the parent mismatches anyway
            (None, None) => Some([0u8; 32]),
        }
    };
    let plain = plain_hashes(plaintext, salt_of, &opaque)?;

    let under_opaque = |id: &NodeId| opaque.keys().any(|o| id.0.len() > o.0.len() && id.0.starts_with(&o.0));
    let ids: BTreeSet<&NodeId> = hashes.nodes.keys().chain(plain.keys()).collect();
    let mut report = SamenessReport::default();
    for id in ids {
        let verdict = if under_opaque(id) {
            NodeVerdict::Unverifiable
        } else {
            match (hashes.nodes.get(id), plain.get(id)) {
                (Some(d), Some(p)) if d.plain == *p => NodeVerdict::Match,
                _ => NodeVerdict::Mismatch,
            }
        };
        report.verdicts.insert(id.clone(), verdict);
    }
    Ok(report)
}

/// Consumer-side check over whatever nodes were decrypted. Public nodes match
/// by construction; redacted nodes match when their opened body recommits to
/// the embedded plaintext hash; the rest are unverifiable.
pub fn verify_opened(
    redacted: &RedactedSbomNode,
    opened: &BTreeMap<NodeId, Opened>,
) -> Result<SamenessReport, MerkleError> {
    let hashes = redacted_pass(redacted)?;
    Ok(verify_opened_with(redacted, &hashes, opened))
}

pub(crate) fn verify_opened_with(
    redacted: &RedactedSbomNode,
    hashes: &RedactedHashes,
    opened: &BTreeMap<NodeId, Opened>,
) -> SamenessReport {
    let mut report = SamenessReport::default();
    redacted.walk(|id, node, _| {
        let verdict = match node.body() {
            Body::Public(_) => NodeVerdict::Match,
            Body::Redacted(sealed) => match opened.get(id) {
                None => NodeVerdict::Unverifiable,
                Some(o) => {
                    let children: Vec<Hash256> = (0..node.children().len())
                        .map(|i| hashes.nodes[&id.child(i)].plain)
                        .collect();
                    if plain_node_hash(node.is_field(), &o.payload, &o.salt, &children) == sealed.plain_hash {
                        NodeVerdict::Match
                    } else {
                        NodeVerdict::Mismatch
                    }
                }
            },
        };
        report.verdicts.insert(id.clone(), verdict);
    });
    report
}
