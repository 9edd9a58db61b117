//! Consumer side: verify signatures, open what the key allows, check every
//! opened node against its committed plaintext hash.

use std::collections::BTreeMap;

use crate::abkem::{decapsulate, decrypt_node, AttributeSecretKey, PublicParams, SymmetricKey};
use crate::encoding::{Hash256, Reader};
use crate::merkle::{
    proof_from_hashes, redacted_pass, select_nodes, verify_membership, verify_opened_with, Body, MembershipProof,
    Opened, ProofTarget, RedactedHashes, RedactedRef, RedactedSbom, RedactedSbomNode, SamenessReport,
};
use crate::month::Month;
use crate::policy::PathSelector;
use crate::purl::Purl;
use crate::sbom::{ComplexNode, FieldNode, Node, NodeId, SbomNode, SbomTree, SourceFormat};

use super::{verify_signatures, PipelineError, TrustedKeys};

/// Names of placeholder nodes start with this.
pub const PLACEHOLDER_PREFIX: &str = "[REDACTED:";

/// What a consumer sees of a node it cannot open.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placeholder {
    pub policy_id: Hash256,
    pub redacted_hash: Hash256,
    pub plain_hash: Hash256,
}

impl Placeholder {
    fn name(&self) -> String {
        format!("{PLACEHOLDER_PREFIX}{}:{}]", &self.policy_id.to_hex()[..16], &self.redacted_hash.to_hex()[..16])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConsumeStats {
    pub decapsulation_attempts: usize,
    pub keys_recovered: usize,
}

#[derive(Clone, Debug)]
pub struct DecryptedView {
    /// The tree with inaccessible nodes replaced by placeholder nodes.
    pub tree: SbomTree,
    pub merkle_root: Hash256,
    pub opened: BTreeMap<NodeId, Opened>,
    pub placeholders: BTreeMap<NodeId, Placeholder>,
    pub report: SamenessReport,
    /// Verified proofs for the nodes matched by the query, if one was given.
    pub membership: Vec<(NodeId, MembershipProof)>,
}

impl DecryptedView {
    pub fn is_accessible(&self, id: &NodeId) -> bool {
        !self.placeholders.contains_key(id)
    }
}

/// Runs the consumption protocol: countersignature, generator signature,
/// embedded attestations, decapsulation of every satisfiable key slot,
/// decryption with per-node plaintext-hash checks, then the optional
/// membership query. Inaccessible nodes become placeholders.
pub fn consume(
    redacted: &RedactedSbom,
    sk: &AttributeSecretKey,
    pp: &PublicParams,
    trust: &TrustedKeys,
    query: Option<&PathSelector>,
    now: Option<Month>,
) -> Result<DecryptedView, PipelineError> {
    consume_instrumented(redacted, sk, pp, trust, query, now, &mut ConsumeStats::default())
}

pub fn consume_instrumented(
    redacted: &RedactedSbom,
    sk: &AttributeSecretKey,
    pp: &PublicParams,
    trust: &TrustedKeys,
    query: Option<&PathSelector>,
    now: Option<Month>,
    stats: &mut ConsumeStats,
) -> Result<DecryptedView, PipelineError> {
    let root_hash = verify_signatures(redacted, trust)?;
    let hashes = redacted_pass(&redacted.root)?;
    check_attestations(redacted, &hashes, trust)?;

    let mut keys: BTreeMap<(NodeId, u32), SymmetricKey> = BTreeMap::new();
    let mut scopes = Vec::new();
    redacted.root.walk(|id, node, _| {
        if let Some(s) = node.as_sbom() {
            scopes.push((id.clone(), s));
        }
    });
    for (id, scope) in &scopes {
        for (i, slot) in scope.keyslots.iter().enumerate() {
            if !slot.access.satisfied_by(sk.attributes(), now) {
                continue;
            }
            stats.decapsulation_attempts += 1;
            if let Ok(k) = decapsulate(pp, slot, sk) {
                stats.keys_recovered += 1;
                keys.insert((id.clone(), i as u32), k);
            }
        }
    }

    let mut opened = BTreeMap::new();
    let mut failure = None;
    redacted.root.walk(|id, node, scope| {
        let Body::Redacted(sealed) = node.body() else { return };
        let Some(key) = keys.get(&(scope.clone(), sealed.slot)) else { return };
        let scope_node = redacted.root.get(scope).and_then(RedactedRef::as_sbom).expect("scope is an SBOM node");
        let pid = scope_node.keyslots[sealed.slot as usize].policy_id;
        match decrypt_node(key, &sealed.node_ciphertext(pid)) {
            Ok((salt, payload)) => {
                opened.insert(id.clone(), Opened { salt, payload });
            }
            Err(_) => {
                failure.get_or_insert_with(|| format!("node {id} does not decrypt under its policy key"));
            }
        }
    });
    if let Some(f) = failure {
        return Err(PipelineError::Lied(f));
    }

    let report = verify_opened_with(&redacted.root, &hashes, &opened);
    if report.mismatched() > 0 {
        let ids: Vec<String> = report.mismatches().iter().map(ToString::to_string).collect();
        return Err(PipelineError::Lied(format!("plaintext hash mismatch at {}", ids.join(", "))));
    }

    let mut placeholders = BTreeMap::new();
    let root = view_sbom(&redacted.root, &NodeId::root(), &hashes, &opened, &mut placeholders)?;
    let format = SourceFormat::from_doc_meta(&root.doc_meta).unwrap_or(SourceFormat::Native);
    let tree = SbomTree::new(root, format);

    let mut membership = Vec::new();
    if let Some(selector) = query {
        let mut names = BTreeMap::new();
        for (id, o) in &opened {
            if let Ok(name) = Reader::new(&o.payload).lp_str() {
                names.insert(id.clone(), name);
            }
        }
        for id in select_nodes(&redacted.root, selector, &names) {
            let proof = proof_from_hashes(&hashes, &id, false)?;
            let plain = hashes.nodes[&id].plain;
            if !verify_membership(&proof, &root_hash) || proof.target_plain_hash() != Some(plain) {
                return Err(PipelineError::Lied(format!("membership proof for {id} does not verify")));
            }
            membership.push((id, proof));
        }
    }

    Ok(DecryptedView { tree, merkle_root: root_hash, opened, placeholders, report, membership })
}

/// Checks every embedded SBOM: its own signatures and the proof of its root
/// in the SBOM that embedded it. Needs no key.
pub fn verify_embedded(redacted: &RedactedSbom, trust: &TrustedKeys) -> Result<(), PipelineError> {
    check_attestations(redacted, &redacted_pass(&redacted.root)?, trust)
}

fn check_attestations(redacted: &RedactedSbom, hashes: &RedactedHashes, trust: &TrustedKeys) -> Result<(), PipelineError> {
    let mut embedded = Vec::new();
    redacted.root.walk(|id, node, _| {
        if let Some(s) = node.as_sbom() {
            if let Some(att) = &s.attestation {
                embedded.push((id.clone(), att.proof.clone()));
            }
        }
    });
    for (id, proof) in embedded {
        let inner = redacted.embedded_at(&id)?.expect("walked to an SBOM node");
        verify_signatures(&inner, trust)
            .map_err(|e| PipelineError::Untrusted(format!("embedded SBOM at {id}: {e}")))?;
        let Some(proof) = proof else { continue };
        let mut anc = id.clone();
        let enclosing = loop {
            anc.0.pop();
            if redacted.root.get(&anc).and_then(RedactedRef::as_sbom).is_some() {
                break hashes.nodes[&anc].redacted;
            }
        };
        if proof.target != ProofTarget::Digest(inner.merkle_root) || !verify_membership(&proof, &enclosing) {
            return Err(PipelineError::Lied(format!("embedded SBOM at {id} is not proven in its parent")));
        }
    }
    Ok(())
}

fn malformed(id: &NodeId) -> PipelineError {
    PipelineError::Lied(format!("node {id} opens to a malformed payload"))
}

fn segments(payload: &[u8], n: usize, id: &NodeId) -> Result<Vec<String>, PipelineError> {
    let mut r = Reader::new(payload);
    let out = (0..n).map(|_| r.lp_str()).collect::<Result<Vec<_>, _>>().map_err(|_| malformed(id))?;
    r.finish().map_err(|_| malformed(id))?;
    Ok(out)
}

/// The node's payload, when public or opened.
fn payload_of<'a>(node: RedactedRef<'a>, id: &NodeId, opened: &'a BTreeMap<NodeId, Opened>) -> Option<&'a [u8]> {
    match node.body() {
        Body::Public(p) => Some(p),
        Body::Redacted(_) => opened.get(id).map(|o| o.payload.as_slice()),
    }
}

fn placeholder(
    node: RedactedRef<'_>,
    id: &NodeId,
    hashes: &RedactedHashes,
    scope: &RedactedSbomNode,
    out: &mut BTreeMap<NodeId, Placeholder>,
) -> Placeholder {
    let Body::Redacted(s) = node.body() else { unreachable!("public nodes are always visible") };
    let d = &hashes.nodes[id];
    let p = Placeholder { policy_id: scope.keyslots[s.slot as usize].policy_id, redacted_hash: d.redacted, plain_hash: d.plain };
    out.insert(id.clone(), p.clone());
    p
}

fn view_children(
    node: RedactedRef<'_>,
    id: &NodeId,
    scope: &RedactedSbomNode,
    hashes: &RedactedHashes,
    opened: &BTreeMap<NodeId, Opened>,
    out: &mut BTreeMap<NodeId, Placeholder>,
) -> Result<Vec<Node>, PipelineError> {
    let mut children = Vec::with_capacity(node.children().len());
    for (i, c) in node.children().iter().enumerate() {
        let cid = id.child(i);
        let cref = RedactedRef::Node(c);
        if let Some(s) = cref.as_sbom() {
            children.push(Node::Sbom(view_sbom(s, &cid, hashes, opened, out)?));
            continue;
        }
        let grandchildren = view_children(cref, &cid, scope, hashes, opened, out)?;
        let payload = payload_of(cref, &cid, opened);
        let n = match (cref.is_field(), payload) {
            (true, Some(p)) => {
                let s = segments(p, 2, &cid)?;
                Node::Field(FieldNode::new(&s[0], &s[1]))
            }
            (true, None) => {
                let ph = placeholder(cref, &cid, hashes, scope, out);
                Node::Field(FieldNode::new(ph.name(), ph.redacted_hash.to_hex()))
            }
            (false, Some(p)) => Node::Complex(ComplexNode::new(&segments(p, 1, &cid)?[0], grandchildren)),
            (false, None) => {
                let ph = placeholder(cref, &cid, hashes, scope, out);
                Node::Complex(ComplexNode::new(ph.name(), grandchildren))
            }
        };
        children.push(n);
    }
    Ok(children)
}

fn view_sbom(
    node: &RedactedSbomNode,
    id: &NodeId,
    hashes: &RedactedHashes,
    opened: &BTreeMap<NodeId, Opened>,
    out: &mut BTreeMap<NodeId, Placeholder>,
) -> Result<SbomNode, PipelineError> {
    let me = RedactedRef::Root(node);
    let children = view_children(me, id, node, hashes, opened, out)?;
    match payload_of(me, id, opened) {
        Some(p) => {
            let s = segments(p, 2, id)?;
            let index = Purl::parse(&s[0]).map_err(|_| malformed(id))?;
            Ok(SbomNode::new(index, &s[1], children))
        }
        None => {
            let ph = placeholder(me, id, hashes, node, out);
            let index = Purl::parse(&format!("pkg:generic/redacted@{}", &ph.redacted_hash.to_hex()[..16]))
                .expect("hex version is a valid purl");
            Ok(SbomNode::new(index, ph.name(), children))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::redact::tests::{env, two_packages};
    use super::super::{countersign, redact, SigningKeyPair};
    use super::*;
    use crate::abkem::abe_keygen;
    use crate::merkle::{NodeVerdict, RedactedNode};
    use crate::policy::{AttributeSet, RedactionPolicy};

    fn attrs(list: &[&str]) -> AttributeSet {
        AttributeSet::from_iter(list.iter().copied()).unwrap()
    }

    fn policy() -> RedactionPolicy {
        RedactionPolicy::public()
            .with_rule(&["**.licenseConcluded"], "role:legal")
            .unwrap()
            .with_rule(&["**.versionInfo"], "(role:scanner AND cert:fedramp) OR role:auditor OR org:federal")
            .unwrap()
    }

    #[test]
    fn full_key_recovers_the_tree() {
        let mut e = env();
        let (b, r) = redact(vec![two_packages()], &policy(), &e.pp, &e.gen, None, &mut e.rng).unwrap();
        let r = countersign(&r, &b, &e.prod, &e.gen.public()).unwrap();
        let sk = abe_keygen(&e.mk, &attrs(&["role:legal", "role:auditor"]), &mut e.rng).unwrap();
        let view = consume(&r, &sk, &e.pp, &e.trust(), None, None).unwrap();
        assert_eq!(view.tree, two_packages());
        assert!(view.placeholders.is_empty());
        assert!(view.report.is_all_match());
    }

    #[test]
    fn scanner_sees_versions_only() {
        let mut e = env();
        let (b, r) = redact(vec![two_packages()], &policy(), &e.pp, &e.gen, None, &mut e.rng).unwrap();
        let r = countersign(&r, &b, &e.prod, &e.gen.public()).unwrap();
        let sk = abe_keygen(&e.mk, &attrs(&["role:scanner", "cert:fedramp"]), &mut e.rng).unwrap();
        let sel = PathSelector::parse("**.versionInfo").unwrap();
        let view = consume(&r, &sk, &e.pp, &e.trust(), Some(&sel), None).unwrap();
        let opened: Vec<String> = view.opened.keys().map(ToString::to_string).collect();
        assert_eq!(opened, ["r/1/1", "r/2/1"]);
        let hidden: Vec<String> = view.placeholders.keys().map(ToString::to_string).collect();
        assert_eq!(hidden, ["r/1/2", "r/2/2"]);
        assert_eq!(view.report.count(NodeVerdict::Unverifiable), 2);
        assert_eq!(view.membership.len(), 2);
        let Node::Complex(c) = &view.tree.root.children[1] else { panic!() };
        assert_eq!(c.children[1], Node::field("versionInfo", "2.10"));
        let Node::Field(f) = &c.children[2] else { panic!() };
        assert!(f.name.starts_with(PLACEHOLDER_PREFIX));
    }

    #[test]
    fn no_access_reveals_no_plaintext() {
        let mut e = env();
        let p = RedactionPolicy::everything(crate::policy::AccessTree::parse("role:legal").unwrap());
        let (b, r) = redact(vec![two_packages()], &p, &e.pp, &e.gen, None, &mut e.rng).unwrap();
        let r = countersign(&r, &b, &e.prod, &e.gen.public()).unwrap();
        let sk = abe_keygen(&e.mk, &attrs(&["role:nobody"]), &mut e.rng).unwrap();
        let mut stats = ConsumeStats::default();
        let view = consume_instrumented(&r, &sk, &e.pp, &e.trust(), None, None, &mut stats).unwrap();
        assert_eq!(stats.decapsulation_attempts, 0);
        assert_eq!(view.placeholders.len(), 10);
        let dump = format!("{:?}", view.tree);
        for secret in ["hello", "GPL", "zlib", "2.10", "demo"] {
            assert!(!dump.contains(secret), "{secret}");
        }
    }

    #[test]
    fn bad_countersignature_short_circuits() {
        let mut e = env();
        let (b, r) = redact(vec![two_packages()], &policy(), &e.pp, &e.gen, None, &mut e.rng).unwrap();
        let rogue = SigningKeyPair::generate(&mut e.rng);
        let r = countersign(&r, &b, &rogue, &e.gen.public()).unwrap();
        let sk = abe_keygen(&e.mk, &attrs(&["role:legal"]), &mut e.rng).unwrap();
        let mut stats = ConsumeStats::default();
        let err = consume_instrumented(&r, &sk, &e.pp, &e.trust(), None, None, &mut stats).unwrap_err();
        assert_eq!(err.code(), "FAIL_UNTRUSTED_SBOM");
        assert_eq!(stats, ConsumeStats::default());
    }

    #[test]
    fn resigned_lie_is_caught_by_plain_hash() {
        let mut e = env();
        let (b, r) = redact(vec![two_packages()], &policy(), &e.pp, &e.gen, None, &mut e.rng).unwrap();
        let mut r = countersign(&r, &b, &e.prod, &e.gen.public()).unwrap();
        let RedactedNode::Complex { children, .. } = &mut r.root.children[1] else { panic!() };
        let Body::Redacted(s) = children[2].body_mut() else { panic!() };
        s.plain_hash.0[0] ^= 1;
        // Both parties sign the lie.
        r.merkle_root = redacted_pass(&r.root).unwrap().merkle_root;
        let sig = e.gen.sign(r.merkle_root.as_bytes());
        r.producer_countersignature = Some(e.prod.sign(&sig));
        r.generator_signature = Some(sig);
        let sk = abe_keygen(&e.mk, &attrs(&["role:legal"]), &mut e.rng).unwrap();
        let err = consume(&r, &sk, &e.pp, &e.trust(), None, None).unwrap_err();
        assert_eq!(err.code(), "FAIL_GENERATOR_PRODUCER_LIED");
    }
}
