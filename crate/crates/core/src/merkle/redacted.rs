//! The redacted tree, its storage encoding and the redacted hash pass.
//!
//! ```text
//! redacted field/complex  H("R", A_n, nonce || ct, h_plain, h_child0, ...)
//! public field/complex    H("P", payload, h_plain, h_child0, ...)
//! sbom                    H(keyslot table, meta, h_plain, h_child0, ...)
//! ```
//!
//! `A_n` is the canonical access-tree encoding of the node's key slot. The
//! `meta` segment carries the marker, the public salt seed and either the
//! plaintext `lp(index) || lp(doc_meta)` or `A_n` and its ciphertext. The
//! root's hash is the SBOM's merkle root.
//!
//! Salts of public nodes are derived from the enclosing SBOM node's seed, so
//! public nodes need not store them; plaintext hashes of public nodes are
//! recomputed instead of stored.

use std::collections::BTreeMap;

use crate::abkem::{NodeCiphertext, PolicyKeySlot, NONCE_LEN};
use crate::encoding::{hash_segments, lp_concat, put_u32, put_varbytes, put_varint, DecodeError, Hash256, Reader};
use crate::sbom::NodeId;

use super::proof::MembershipProof;
use super::{plain_node_hash, MerkleError, Salt};

pub const MARKER_REDACTED: u8 = 0x52;
pub const MARKER_PUBLIC: u8 = 0x50;

const MAX_DEPTH: usize = 512;

/// An encrypted node body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sealed {
    /// Index into the enclosing SBOM node's key slot table.
    pub slot: u32,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub plain_hash: Hash256,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Body {
    /// Canonical payload of the node.
    Public(Vec<u8>),
    Redacted(Sealed),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RedactedNode {
    Field(Body),
    Complex { body: Body, children: Vec<RedactedNode> },
    Sbom(Box<RedactedSbomNode>),
}

/// Signatures of an SBOM that was redacted on its own and later embedded,
/// plus its membership proof in the enclosing tree. Not covered by any hash.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attestation {
    pub generator_signature: Vec<u8>,
    pub producer_countersignature: Option<Vec<u8>>,
    pub proof: Option<MembershipProof>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedactedSbomNode {
    pub salt_seed: [u8; 32],
    pub keyslots: Vec<PolicyKeySlot>,
    pub meta: Body,
    pub children: Vec<RedactedNode>,
    pub attestation: Option<Attestation>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedactedSbom {
    pub root: RedactedSbomNode,
    pub merkle_root: Hash256,
    pub generator_signature: Option<Vec<u8>>,
    pub producer_countersignature: Option<Vec<u8>>,
}

/// Hashes of one node from the redacted pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeDigest {
    pub plain: Hash256,
    pub redacted: Hash256,
    /// Segments preceding the child hashes in the redacted hash input.
    pub head: Vec<Vec<u8>>,
    /// Derived salt, for public nodes.
    pub public_salt: Option<Salt>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedactedHashes {
    pub nodes: BTreeMap<NodeId, NodeDigest>,
    pub merkle_root: Hash256,
}

/// Salt of a public node at `rel` (relative to its SBOM node) under `seed`.
pub fn public_salt(seed: &[u8; 32], rel: &NodeId) -> Salt {
    let mut path = Vec::with_capacity(rel.0.len() * 4);
    for i in &rel.0 {
        put_u32(&mut path, *i);
    }
    hash_segments([b"petra-public-salt".as_slice(), seed, &path]).0
}

impl Sealed {
    pub fn node_ciphertext(&self, policy_id: Hash256) -> NodeCiphertext {
        NodeCiphertext { policy_id, nonce: self.nonce, ciphertext: self.ciphertext.clone() }
    }

    fn body_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(NONCE_LEN + self.ciphertext.len());
        b.extend_from_slice(&self.nonce);
        b.extend_from_slice(&self.ciphertext);
        b
    }
}

impl Body {
    pub fn is_redacted(&self) -> bool {
        matches!(self, Body::Redacted(_))
    }

    pub fn marker(&self) -> u8 {
        match self {
            Body::Public(_) => MARKER_PUBLIC,
            Body::Redacted(_) => MARKER_REDACTED,
        }
    }
}

impl RedactedNode {
    pub fn children(&self) -> &[RedactedNode] {
        match self {
            RedactedNode::Field(_) => &[],
            RedactedNode::Complex { children, .. } => children,
            RedactedNode::Sbom(s) => &s.children,
        }
    }

    pub fn children_mut(&mut self) -> Option<&mut Vec<RedactedNode>> {
        match self {
            RedactedNode::Field(_) => None,
            RedactedNode::Complex { children, .. } => Some(children),
            RedactedNode::Sbom(s) => Some(&mut s.children),
        }
    }

    pub fn body(&self) -> &Body {
        match self {
            RedactedNode::Field(b) | RedactedNode::Complex { body: b, .. } => b,
            RedactedNode::Sbom(s) => &s.meta,
        }
    }

    pub fn body_mut(&mut self) -> &mut Body {
        match self {
            RedactedNode::Field(b) | RedactedNode::Complex { body: b, .. } => b,
            RedactedNode::Sbom(s) => &mut s.meta,
        }
    }

    /// Name usable in selectors, when the node is public.
    pub fn public_name(&self) -> Option<String> {
        match self {
            RedactedNode::Sbom(_) => Some(crate::sbom::SBOM_SEGMENT.to_owned()),
            RedactedNode::Field(Body::Public(p)) | RedactedNode::Complex { body: Body::Public(p), .. } => {
                let mut r = Reader::new(p);
                r.lp_str().ok()
            }
            _ => None,
        }
    }
}

/// Borrowed node of a redacted tree, root included.
#[derive(Clone, Copy, Debug)]
pub enum RedactedRef<'a> {
    Node(&'a RedactedNode),
    Root(&'a RedactedSbomNode),
}

impl<'a> RedactedRef<'a> {
    pub fn children(self) -> &'a [RedactedNode] {
        match self {
            RedactedRef::Node(n) => n.children(),
            RedactedRef::Root(s) => &s.children,
        }
    }

    pub fn body(self) -> &'a Body {
        match self {
            RedactedRef::Node(n) => n.body(),
            RedactedRef::Root(s) => &s.meta,
        }
    }

    pub fn as_sbom(self) -> Option<&'a RedactedSbomNode> {
        match self {
            RedactedRef::Node(RedactedNode::Sbom(s)) => Some(s),
            RedactedRef::Root(s) => Some(s),
            RedactedRef::Node(_) => None,
        }
    }

    pub fn is_field(self) -> bool {
        matches!(self, RedactedRef::Node(RedactedNode::Field(_)))
    }

    pub fn public_name(self) -> Option<String> {
        match self {
            RedactedRef::Node(n) => n.public_name(),
            RedactedRef::Root(_) => Some(crate::sbom::SBOM_SEGMENT.to_owned()),
        }
    }
}

impl RedactedSbomNode {
    pub fn get(&self, id: &NodeId) -> Option<RedactedRef<'_>> {
        let mut cur = RedactedRef::Root(self);
        for &i in &id.0 {
            cur = RedactedRef::Node(cur.children().get(i as usize)?);
        }
        Some(cur)
    }

    /// Pre-order walk. The callback also receives the id of the nearest
    /// enclosing SBOM node (the node itself for SBOM nodes).
    pub fn walk<'a>(&'a self, mut f: impl FnMut(&NodeId, RedactedRef<'a>, &NodeId)) {
        fn go<'a>(
            node: RedactedRef<'a>,
            id: NodeId,
            scope: &NodeId,
            f: &mut dyn FnMut(&NodeId, RedactedRef<'a>, &NodeId),
        ) {
            let scope = if node.as_sbom().is_some() { id.clone() } else { scope.clone() };
            f(&id, node, &scope);
            for (i, c) in node.children().iter().enumerate() {
                go(RedactedRef::Node(c), id.child(i), &scope, f);
            }
        }
        go(RedactedRef::Root(self), NodeId::root(), &NodeId::root(), &mut f);
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(|_, _, _| n += 1);
        n
    }

    fn slot(&self, idx: u32, node: &NodeId) -> Result<&PolicyKeySlot, MerkleError> {
        self.keyslots.get(idx as usize).ok_or(MerkleError::DanglingSlot { node: node.clone(), slot: idx })
    }

    /// Canonical storage encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        encode_sbom(self, &mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let node = decode_sbom(&mut r, 0)?;
        r.finish()?;
        Ok(node)
    }
}

impl RedactedSbom {
    /// Recomputes the root over the tree and wraps it, unsigned.
    pub fn from_root(root: RedactedSbomNode) -> Result<Self, MerkleError> {
        let merkle_root = redacted_pass(&root)?.merkle_root;
        Ok(RedactedSbom { root, merkle_root, generator_signature: None, producer_countersignature: None })
    }

    /// The standalone SBOM embedded at `id`, with its own signatures.
    pub fn embedded_at(&self, id: &NodeId) -> Result<Option<RedactedSbom>, MerkleError> {
        let Some(node) = self.root.get(id).and_then(RedactedRef::as_sbom) else {
            return Ok(None);
        };
        let mut inner = node.clone();
        let att = inner.attestation.take();
        let mut out = RedactedSbom::from_root(inner)?;
        if let Some(a) = att {
            out.generator_signature = Some(a.generator_signature);
            out.producer_countersignature = a.producer_countersignature;
        }
        Ok(Some(out))
    }
}

fn check_public_payload(payload: &[u8], segments: usize) -> bool {
    let mut r = Reader::new(payload);
    (0..segments).all(|_| r.lp().is_ok()) && r.remaining() == 0
}

fn slot_table(slots: &[PolicyKeySlot]) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, slots.len() as u32);
    for s in slots {
        crate::encoding::put_lp(&mut out, &s.to_bytes());
    }
    out
}

/// Runs the redacted pass over the whole tree, nested SBOM nodes included.
pub fn redacted_pass(root: &RedactedSbomNode) -> Result<RedactedHashes, MerkleError> {
    let mut nodes = BTreeMap::new();
    let d = pass_sbom(root, NodeId::root(), &mut nodes)?;
    Ok(RedactedHashes { nodes, merkle_root: d })
}

fn pass_children(
    children: &[RedactedNode],
    id: &NodeId,
    scope: &RedactedSbomNode,
    rel: &NodeId,
    out: &mut BTreeMap<NodeId, NodeDigest>,
) -> Result<(Vec<Hash256>, Vec<Hash256>), MerkleError> {
    let mut plain = Vec::with_capacity(children.len());
    let mut red = Vec::with_capacity(children.len());
    for (i, c) in children.iter().enumerate() {
        let (p, r) = pass_node(c, id.child(i), scope, &rel.child(i), out)?;
        plain.push(p);
        red.push(r);
    }
    Ok((plain, red))
}

fn finish(
    id: NodeId,
    plain: Hash256,
    head: Vec<Vec<u8>>,
    child_red: &[Hash256],
    public_salt: Option<Salt>,
    out: &mut BTreeMap<NodeId, NodeDigest>,
) -> (Hash256, Hash256) {
    let redacted = hash_segments(head.iter().map(Vec::as_slice).chain(child_red.iter().map(AsRef::as_ref)));
    out.insert(id, NodeDigest { plain, redacted, head, public_salt });
    (plain, redacted)
}

fn pass_sbom(node: &RedactedSbomNode, id: NodeId, out: &mut BTreeMap<NodeId, NodeDigest>) -> Result<Hash256, MerkleError> {
    let rel = NodeId::root();
    let (child_plain, child_red) = pass_children(&node.children, &id, node, &rel, out)?;
    let mut meta = vec![node.meta.marker()];
    crate::encoding::put_lp(&mut meta, &node.salt_seed);
    let (plain, salt) = match &node.meta {
        Body::Public(p) => {
            if !check_public_payload(p, 2) {
                return Err(MerkleError::MalformedPayload(id));
            }
            crate::encoding::put_lp(&mut meta, p);
            let salt = public_salt(&node.salt_seed, &rel);
            (plain_node_hash(false, p, &salt, &child_plain), Some(salt))
        }
        Body::Redacted(s) => {
            crate::encoding::put_lp(&mut meta, &node.slot(s.slot, &id)?.access.encode());
            crate::encoding::put_lp(&mut meta, &s.body_bytes());
            (s.plain_hash, None)
        }
    };
    let head = vec![slot_table(&node.keyslots), meta, plain.0.to_vec()];
    Ok(finish(id, plain, head, &child_red, salt, out).1)
}

fn pass_node(
    node: &RedactedNode,
    id: NodeId,
    scope: &RedactedSbomNode,
    rel: &NodeId,
    out: &mut BTreeMap<NodeId, NodeDigest>,
) -> Result<(Hash256, Hash256), MerkleError> {
    if let RedactedNode::Sbom(s) = node {
        let r = pass_sbom(s, id.clone(), out)?;
        return Ok((out[&id].plain, r));
    }
    let is_field = matches!(node, RedactedNode::Field(_));
    let (child_plain, child_red) = pass_children(node.children(), &id, scope, rel, out)?;
    match node.body() {
        Body::Public(p) => {
            if !check_public_payload(p, if is_field { 2 } else { 1 }) {
                return Err(MerkleError::MalformedPayload(id));
            }
            let salt = public_salt(&scope.salt_seed, rel);
            let plain = plain_node_hash(is_field, p, &salt, &child_plain);
            let head = vec![vec![MARKER_PUBLIC], p.clone(), plain.0.to_vec()];
            Ok(finish(id, plain, head, &child_red, Some(salt), out))
        }
        Body::Redacted(s) => {
            let access = scope.slot(s.slot, &id)?.access.encode();
            let head = vec![vec![MARKER_REDACTED], access, s.body_bytes(), s.plain_hash.0.to_vec()];
            Ok(finish(id, s.plain_hash, head, &child_red, None, out))
        }
    }
}

// Storage encoding. Hash inputs above never depend on it.

const TAG_FIELD_PUBLIC: u8 = 0x10;
const TAG_FIELD_SEALED: u8 = 0x11;
const TAG_COMPLEX_PUBLIC: u8 = 0x20;
const TAG_COMPLEX_SEALED: u8 = 0x21;
const TAG_SBOM: u8 = 0x30;

fn encode_sealed(s: &Sealed, out: &mut Vec<u8>) {
    put_varint(out, u64::from(s.slot));
    out.extend_from_slice(&s.nonce);
    put_varbytes(out, &s.ciphertext);
    out.extend_from_slice(s.plain_hash.as_bytes());
}

fn decode_sealed(r: &mut Reader<'_>) -> Result<Sealed, DecodeError> {
    let slot = u32::try_from(r.varint()?).map_err(|_| DecodeError::Invalid("slot index"))?;
    let nonce = r.array::<NONCE_LEN>()?;
    let ciphertext = r.varbytes()?.to_vec();
    let plain_hash = r.hash()?;
    Ok(Sealed { slot, nonce, ciphertext, plain_hash })
}

/// Public payloads are stored as varint-prefixed segments instead of the
/// 4-byte prefixes of the canonical payload.
fn encode_public(payload: &[u8], out: &mut Vec<u8>) {
    let mut r = Reader::new(payload);
    while r.remaining() > 0 {
        match r.lp() {
            Ok(seg) => put_varbytes(out, seg),
            Err(_) => unreachable!("public payloads are validated before encoding"),
        }
    }
}

fn decode_public(r: &mut Reader<'_>, segments: usize) -> Result<Vec<u8>, DecodeError> {
    let segs = (0..segments).map(|_| r.varbytes()).collect::<Result<Vec<_>, _>>()?;
    Ok(lp_concat(segs))
}

fn encode_children(children: &[RedactedNode], out: &mut Vec<u8>) {
    put_varint(out, children.len() as u64);
    for c in children {
        encode_node(c, out);
    }
}

fn decode_children(r: &mut Reader<'_>, depth: usize) -> Result<Vec<RedactedNode>, DecodeError> {
    let n = r.varint()? as usize;
    if n > r.remaining() {
        return Err(DecodeError::Truncated);
    }
    (0..n).map(|_| decode_node(r, depth + 1)).collect()
}

fn encode_node(node: &RedactedNode, out: &mut Vec<u8>) {
    match node {
        RedactedNode::Field(Body::Public(p)) => {
            out.push(TAG_FIELD_PUBLIC);
            encode_public(p, out);
        }
        RedactedNode::Field(Body::Redacted(s)) => {
            out.push(TAG_FIELD_SEALED);
            encode_sealed(s, out);
        }
        RedactedNode::Complex { body: Body::Public(p), children } => {
            out.push(TAG_COMPLEX_PUBLIC);
            encode_public(p, out);
            encode_children(children, out);
        }
        RedactedNode::Complex { body: Body::Redacted(s), children } => {
            out.push(TAG_COMPLEX_SEALED);
            encode_sealed(s, out);
            encode_children(children, out);
        }
        RedactedNode::Sbom(s) => {
            out.push(TAG_SBOM);
            encode_sbom(s, out);
        }
    }
}

fn decode_node(r: &mut Reader<'_>, depth: usize) -> Result<RedactedNode, DecodeError> {
    if depth > MAX_DEPTH {
        return Err(DecodeError::Invalid("tree too deep"));
    }
    Ok(match r.u8()? {
        TAG_FIELD_PUBLIC => RedactedNode::Field(Body::Public(decode_public(r, 2)?)),
        TAG_FIELD_SEALED => RedactedNode::Field(Body::Redacted(decode_sealed(r)?)),
        TAG_COMPLEX_PUBLIC => {
            let body = Body::Public(decode_public(r, 1)?);
            RedactedNode::Complex { body, children: decode_children(r, depth)? }
        }
        TAG_COMPLEX_SEALED => {
            let body = Body::Redacted(decode_sealed(r)?);
            RedactedNode::Complex { body, children: decode_children(r, depth)? }
        }
        TAG_SBOM => RedactedNode::Sbom(Box::new(decode_sbom(r, depth)?)),
        _ => return Err(DecodeError::Invalid("redacted node tag")),
    })
}

fn put_opt_bytes(out: &mut Vec<u8>, b: Option<&[u8]>) {
    match b {
        None => out.push(0),
        Some(b) => {
            out.push(1);
            put_varbytes(out, b);
        }
    }
}

fn opt_bytes<'a>(r: &mut Reader<'a>) -> Result<Option<&'a [u8]>, DecodeError> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(r.varbytes()?)),
        _ => Err(DecodeError::Invalid("option flag")),
    }
}

fn encode_sbom(s: &RedactedSbomNode, out: &mut Vec<u8>) {
    out.extend_from_slice(&s.salt_seed);
    put_varint(out, s.keyslots.len() as u64);
    for slot in &s.keyslots {
        put_varbytes(out, &slot.to_bytes());
    }
    match &s.meta {
        Body::Public(p) => {
            out.push(MARKER_PUBLIC);
            encode_public(p, out);
        }
        Body::Redacted(sealed) => {
            out.push(MARKER_REDACTED);
            encode_sealed(sealed, out);
        }
    }
    encode_children(&s.children, out);
    match &s.attestation {
        None => out.push(0),
        Some(a) => {
            out.push(1);
            put_varbytes(out, &a.generator_signature);
            put_opt_bytes(out, a.producer_countersignature.as_deref());
            put_opt_bytes(out, a.proof.as_ref().map(MembershipProof::to_bytes).as_deref());
        }
    }
}

fn decode_sbom(r: &mut Reader<'_>, depth: usize) -> Result<RedactedSbomNode, DecodeError> {
    let salt_seed = r.array::<32>()?;
    let n = r.varint()? as usize;
    if n > r.remaining() {
        return Err(DecodeError::Truncated);
    }
    let mut keyslots = Vec::with_capacity(n);
    for _ in 0..n {
        let bytes = r.varbytes()?;
        keyslots.push(PolicyKeySlot::from_bytes(bytes).map_err(|_| DecodeError::Invalid("key slot"))?);
    }
    let meta = match r.u8()? {
        MARKER_PUBLIC => Body::Public(decode_public(r, 2)?),
        MARKER_REDACTED => Body::Redacted(decode_sealed(r)?),
        _ => return Err(DecodeError::Invalid("sbom meta marker")),
    };
    let children = decode_children(r, depth)?;
    let attestation = match r.u8()? {
        0 => None,
        1 => {
            let generator_signature = r.varbytes()?.to_vec();
            let producer_countersignature = opt_bytes(r)?.map(<[u8]>::to_vec);
            let proof = opt_bytes(r)?.map(MembershipProof::from_bytes).transpose()?;
            Some(Attestation { generator_signature, producer_countersignature, proof })
        }
        _ => return Err(DecodeError::Invalid("attestation flag")),
    };
    Ok(RedactedSbomNode { salt_seed, keyslots, meta, children, attestation })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::policy::AccessTree;

    pub(crate) fn slot_for(expr: &str) -> PolicyKeySlot {
        let access = AccessTree::parse(expr).unwrap();
        let mut capsule = b"PABE\xf0C".to_vec();
        capsule.extend_from_slice(&[0xAB; 96]);
        PolicyKeySlot { policy_id: access.policy_id(), access, encapsulated_key: capsule }
    }

    pub(crate) fn sealed(slot: u32, fill: u8) -> Sealed {
        Sealed { slot, nonce: [fill; NONCE_LEN], ciphertext: vec![fill; 40], plain_hash: Hash256([fill; 32]) }
    }

    pub(crate) fn sample() -> RedactedSbomNode {
        RedactedSbomNode {
            salt_seed: [3u8; 32],
            keyslots: vec![slot_for("a:x OR b:y")],
            meta: Body::Public(lp_concat([b"pkg:generic/x@1".as_slice(), b"format=native"])),
            children: vec![
                RedactedNode::Complex {
                    body: Body::Public(lp_concat([b"package".as_slice()])),
                    children: vec![
                        RedactedNode::Field(Body::Public(lp_concat([b"name".as_slice(), b"x"]))),
                        RedactedNode::Field(Body::Redacted(sealed(0, 7))),
                    ],
                },
                RedactedNode::Sbom(Box::new(RedactedSbomNode {
                    salt_seed: [4u8; 32],
                    keyslots: vec![],
                    meta: Body::Public(lp_concat([b"pkg:generic/y@2".as_slice(), b"format=native"])),
                    children: vec![RedactedNode::Field(Body::Public(lp_concat([b"k".as_slice(), b"v"])))],
                    attestation: Some(Attestation {
                        generator_signature: vec![1; 64],
                        producer_countersignature: None,
                        proof: None,
                    }),
                })),
            ],
            attestation: None,
        }
    }

    #[test]
    fn storage_round_trip() {
        let s = sample();
        let bytes = s.to_bytes();
        assert_eq!(RedactedSbomNode::from_bytes(&bytes).unwrap(), s);
        assert!(RedactedSbomNode::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(RedactedSbomNode::from_bytes(&extra).is_err());
    }

    #[test]
    fn every_node_is_hashed_and_root_is_stable() {
        let s = sample();
        let a = redacted_pass(&s).unwrap();
        assert_eq!(a.nodes.len(), s.node_count());
        assert_eq!(a.nodes.len(), 6);
        assert_eq!(redacted_pass(&s).unwrap().merkle_root, a.merkle_root);
        assert_eq!(a.nodes[&NodeId::root()].redacted, a.merkle_root);
        assert_eq!(a.nodes[&NodeId(vec![0, 1])].plain, Hash256([7; 32]));
    }

    #[test]
    fn any_ciphertext_byte_changes_the_root() {
        let s = sample();
        let root = redacted_pass(&s).unwrap().merkle_root;
        for i in 0..40 {
            let mut t = s.clone();
            let RedactedNode::Complex { children, .. } = &mut t.children[0] else { unreachable!() };
            let Body::Redacted(sealed) = children[1].body_mut() else { unreachable!() };
            sealed.ciphertext[i] ^= 0x01;
            assert_ne!(redacted_pass(&t).unwrap().merkle_root, root);
        }
    }

    #[test]
    fn nested_sbom_hash_equals_its_standalone_root() {
        let s = sample();
        let whole = redacted_pass(&s).unwrap();
        let RedactedNode::Sbom(inner) = &s.children[1] else { unreachable!() };
        let alone = redacted_pass(inner).unwrap();
        assert_eq!(whole.nodes[&NodeId(vec![1])].redacted, alone.merkle_root);
        let embedded = RedactedSbom::from_root(s).unwrap().embedded_at(&NodeId(vec![1])).unwrap().unwrap();
        assert_eq!(embedded.merkle_root, alone.merkle_root);
        assert_eq!(embedded.generator_signature, Some(vec![1; 64]));
        assert!(embedded.root.attestation.is_none());
    }

    #[test]
    fn dangling_slot_is_reported() {
        let mut s = sample();
        s.keyslots.clear();
        assert_eq!(
            redacted_pass(&s).unwrap_err(),
            MerkleError::DanglingSlot { node: NodeId(vec![0, 1]), slot: 0 }
        );
    }

    #[test]
    fn attestation_is_outside_the_hash() {
        let s = sample();
        let mut t = s.clone();
        let RedactedNode::Sbom(inner) = &mut t.children[1] else { unreachable!() };
        inner.attestation = None;
        assert_eq!(redacted_pass(&s).unwrap().merkle_root, redacted_pass(&t).unwrap().merkle_root);
    }
}
