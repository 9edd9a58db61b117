//! Generator and producer side: redaction, composition and countersigning.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use crate::abkem::{encapsulate, encrypt_node, PolicyKeySlot, PublicParams, SymmetricKey};
use crate::encoding::Hash256;
use crate::merkle::{
    plain_node_hash, proof_from_hashes, public_salt, redacted_pass, verify_sameness, Attestation, Body,
    NodeVerdict, RedactedNode, RedactedSbom, RedactedSbomNode, Salt, SamenessReport, Sealed, EMBEDDED_PLACEHOLDER,
};
use crate::month::Month;
use crate::policy::{resolve_policy_at, AccessTree, RedactionPolicy, Resolution};
use crate::sbom::{Node, NodeId, SbomNode, SbomTree};

use super::{check_generator_signature, verify_signatures, PipelineError, SigningKeyPair, TrustedKeys};

/// Element type of the complex node that wraps an embedded SBOM.
pub const EMBEDDED_ENVELOPE: &str = "embedded-sbom";

/// The producer-side plaintext: the tree that was redacted and the salt of
/// every redacted node. Public node salts are derived and not listed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainSbomBundle {
    pub tree: SbomTree,
    pub salts: BTreeMap<NodeId, Salt>,
}

struct Scope {
    seed: [u8; 32],
    slots: Vec<PolicyKeySlot>,
    keys: Vec<SymmetricKey>,
}

struct Builder<'a, R> {
    pp: &'a PublicParams,
    resolution: BTreeMap<NodeId, Resolution>,
    embedded: BTreeMap<NodeId, RedactedSbomNode>,
    salts: BTreeMap<NodeId, Salt>,
    rng: &'a mut R,
}

impl<R: RngCore + CryptoRng> Builder<'_, R> {
    fn random32(&mut self) -> [u8; 32] {
        let mut b = [0u8; 32];
        self.rng.fill_bytes(&mut b);
        b
    }

    fn slot_for(&mut self, scope: &mut Scope, access: &AccessTree) -> Result<u32, PipelineError> {
        let pid = access.policy_id();
        if let Some(i) = scope.slots.iter().position(|s| s.policy_id == pid) {
            return Ok(i as u32);
        }
        let (key, slot) = encapsulate(self.pp, access, self.rng)?;
        scope.slots.push(slot);
        scope.keys.push(key);
        Ok(scope.slots.len() as u32 - 1)
    }

    fn seal(
        &mut self,
        payload: Vec<u8>,
        is_field: bool,
        child_plain: &[Hash256],
        id: &NodeId,
        rel: &NodeId,
        scope: &mut Scope,
    ) -> Result<(Body, Hash256), PipelineError> {
        match self.resolution.get(id).cloned().unwrap_or(Resolution::Public) {
            Resolution::Public => {
                let salt = public_salt(&scope.seed, rel);
                Ok((Body::Public(payload.clone()), plain_node_hash(is_field, &payload, &salt, child_plain)))
            }
            Resolution::Access(access) => {
                let salt = self.random32();
                self.salts.insert(id.clone(), salt);
                let plain_hash = plain_node_hash(is_field, &payload, &salt, child_plain);
                let slot = self.slot_for(scope, &access)?;
                let ct = encrypt_node(&scope.keys[slot as usize], access.policy_id(), &salt, &payload, self.rng);
                Ok((Body::Redacted(Sealed { slot, nonce: ct.nonce, ciphertext: ct.ciphertext, plain_hash }), plain_hash))
            }
        }
    }

    fn children(
        &mut self,
        children: &[Node],
        id: &NodeId,
        rel: &NodeId,
        scope: &mut Scope,
    ) -> Result<(Vec<RedactedNode>, Vec<Hash256>), PipelineError> {
        let mut nodes = Vec::with_capacity(children.len());
        let mut plain = Vec::with_capacity(children.len());
        for (i, c) in children.iter().enumerate() {
            let (n, h) = self.node(c, id.child(i), rel.child(i), scope)?;
            nodes.push(n);
            plain.push(h);
        }
        Ok((nodes, plain))
    }

    fn node(&mut self, node: &Node, id: NodeId, rel: NodeId, scope: &mut Scope) -> Result<(RedactedNode, Hash256), PipelineError> {
        if let Some(inner) = self.embedded.remove(&id) {
            let plain = redacted_pass(&inner)?.nodes[&NodeId::root()].plain;
            return Ok((RedactedNode::Sbom(Box::new(inner)), plain));
        }
        match node {
            Node::Sbom(s) => {
                let (n, h) = self.sbom(s, id)?;
                Ok((RedactedNode::Sbom(Box::new(n)), h))
            }
            Node::Field(f) => {
                let (body, h) = self.seal(f.payload(), true, &[], &id, &rel, scope)?;
                Ok((RedactedNode::Field(body), h))
            }
            Node::Complex(c) => {
                let (children, plain) = self.children(&c.children, &id, &rel, scope)?;
                let (body, h) = self.seal(c.payload(), false, &plain, &id, &rel, scope)?;
                Ok((RedactedNode::Complex { body, children }, h))
            }
        }
    }

    /// Every SBOM node is redacted on its own: fresh seed and key slots.
    fn sbom(&mut self, node: &SbomNode, id: NodeId) -> Result<(RedactedSbomNode, Hash256), PipelineError> {
        let mut scope = Scope { seed: self.random32(), slots: Vec::new(), keys: Vec::new() };
        let rel = NodeId::root();
        let (children, plain) = self.children(&node.children, &id, &rel, &mut scope)?;
        let (meta, h) = self.seal(node.payload(), false, &plain, &id, &rel, &mut scope)?;
        let out = RedactedSbomNode { salt_seed: scope.seed, keyslots: scope.slots, meta, children, attestation: None };
        Ok((out, h))
    }
}

fn build<R: RngCore + CryptoRng>(
    tree: &SbomTree,
    policy: &RedactionPolicy,
    pp: &PublicParams,
    window: Option<Month>,
    embedded: BTreeMap<NodeId, RedactedSbomNode>,
    rng: &mut R,
) -> Result<(PlainSbomBundle, RedactedSbomNode), PipelineError> {
    let resolution = resolve_policy_at(policy, tree, window)?;
    let mut b = Builder { pp, resolution, embedded, salts: BTreeMap::new(), rng };
    let (root, _) = b.sbom(&tree.root, NodeId::root())?;
    Ok((PlainSbomBundle { tree: tree.clone(), salts: b.salts }, root))
}

fn sign_root(root: RedactedSbomNode, gen: &SigningKeyPair) -> Result<RedactedSbom, PipelineError> {
    let mut out = RedactedSbom::from_root(root)?;
    out.generator_signature = Some(gen.sign(out.merkle_root.as_bytes()));
    Ok(out)
}

/// Composes the inputs (the first is the top-level artifact, the rest become
/// nested SBOM nodes), encrypts every node its policy gates, runs both Merkle
/// passes and signs the root. `window` is the expiry window conjoined to
/// every access tree when the policy enforces expiry.
pub fn redact<R: RngCore + CryptoRng>(
    inputs: Vec<SbomTree>,
    policy: &RedactionPolicy,
    pp: &PublicParams,
    gen: &SigningKeyPair,
    window: Option<Month>,
    rng: &mut R,
) -> Result<(PlainSbomBundle, RedactedSbom), PipelineError> {
    let tree = SbomTree::compose(inputs).ok_or(PipelineError::NoInput)?;
    tree.validate()?;
    let (bundle, root) = build(&tree, policy, pp, window, BTreeMap::new(), rng)?;
    Ok((bundle, sign_root(root, gen)?))
}

/// Embeds an already redacted and signed SBOM into `parent` without its
/// plaintext. The child keeps its bytes, root and signatures; a membership
/// proof of its root in the new tree is attached alongside them.
pub fn compose<R: RngCore + CryptoRng>(
    parent: &SbomTree,
    child: &RedactedSbom,
    policy: &RedactionPolicy,
    pp: &PublicParams,
    gen: &SigningKeyPair,
    trust: &TrustedKeys,
    window: Option<Month>,
    rng: &mut R,
) -> Result<(PlainSbomBundle, RedactedSbom), PipelineError> {
    verify_signatures(child, trust)?;
    parent.validate()?;
    let mut tree = parent.clone();
    tree.root.children.push(Node::complex(
        EMBEDDED_ENVELOPE,
        vec![Node::field(EMBEDDED_PLACEHOLDER, child.merkle_root.to_hex())],
    ));
    let at = NodeId(vec![tree.root.children.len() as u32 - 1, 0]);

    let mut inner = child.root.clone();
    inner.attestation = Some(Attestation {
        generator_signature: child.generator_signature.clone().unwrap_or_default(),
        producer_countersignature: child.producer_countersignature.clone(),
        proof: None,
    });
    let (bundle, mut root) = build(&tree, policy, pp, window, BTreeMap::from([(at.clone(), inner)]), rng)?;

    let proof = proof_from_hashes(&redacted_pass(&root)?, &at, true)?;
    let RedactedNode::Complex { children, .. } = &mut root.children[at.0[0] as usize] else {
        unreachable!("the envelope is a complex node")
    };
    let RedactedNode::Sbom(embedded) = &mut children[0] else { unreachable!("embedded SBOM node") };
    if let Some(att) = embedded.attestation.as_mut() {
        att.proof = Some(proof);
    }
    Ok((bundle, sign_root(root, gen)?))
}

/// Producer-side audit: the generator signature covers the tree and the tree
/// commits to the bundle's plaintext.
pub fn audit(
    redacted: &RedactedSbom,
    bundle: &PlainSbomBundle,
    generator: &crate::pipeline::VerifyingKey,
) -> Result<SamenessReport, PipelineError> {
    check_generator_signature(redacted, generator).map_err(|e| PipelineError::SamenessFailure {
        reason: e.to_string(),
        mismatched: Vec::new(),
    })?;
    Ok(verify_sameness(&redacted.root, &bundle.tree, &bundle.salts)?)
}

/// Countersigns after checking sameness against the plaintext bundle.
pub fn countersign(
    redacted: &RedactedSbom,
    bundle: &PlainSbomBundle,
    producer: &SigningKeyPair,
    generator: &crate::pipeline::VerifyingKey,
) -> Result<RedactedSbom, PipelineError> {
    let report = audit(redacted, bundle, generator)?;
    if report.count(NodeVerdict::Mismatch) > 0 {
        return Err(PipelineError::SamenessFailure {
            reason: "plaintext hashes differ".into(),
            mismatched: report.mismatches(),
        });
    }
    let mut out = redacted.clone();
    let sig = out.generator_signature.as_deref().expect("checked by audit");
    out.producer_countersignature = Some(producer.sign(sig));
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::abkem::{abe_setup, Scheme};
    use crate::pipeline::verify_signature;
    use crate::purl::Purl;
    use crate::sbom::FieldNode;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    pub(crate) fn two_packages() -> SbomTree {
        let pkg = |name: &str, version: &str, license: &str| {
            Node::complex(
                "packages[]",
                vec![
                    Node::field("name", name),
                    Node::field("versionInfo", version),
                    Node::field("licenseConcluded", license),
                ],
            )
        };
        SbomTree::new(
            SbomNode::new(
                Purl::parse("pkg:generic/demo@1.0").unwrap(),
                "format=native",
                vec![Node::field("name", "demo"), pkg("hello", "2.10", "GPL-3.0-or-later"), pkg("zlib", "1.3", "Zlib")],
            ),
            crate::sbom::SourceFormat::Native,
        )
    }

    pub(crate) struct Env {
        pub rng: StdRng,
        pub pp: PublicParams,
        pub mk: crate::abkem::MasterKey,
        pub gen: SigningKeyPair,
        pub prod: SigningKeyPair,
    }

    pub(crate) fn env() -> Env {
        let mut rng = StdRng::seed_from_u64(42);
        let (pp, mk) = abe_setup(Scheme::InsecureTest, 128, &mut rng).unwrap();
        let gen = SigningKeyPair::generate(&mut rng);
        let prod = SigningKeyPair::generate(&mut rng);
        Env { rng, pp, mk, gen, prod }
    }

    impl Env {
        pub fn trust(&self) -> TrustedKeys {
            TrustedKeys { generator: self.gen.public(), producer: self.prod.public() }
        }
    }

    #[test]
    fn public_policy_has_no_slots_and_no_salts() {
        let mut e = env();
        let (bundle, r) = redact(vec![two_packages()], &RedactionPolicy::public(), &e.pp, &e.gen, None, &mut e.rng).unwrap();
        assert!(r.root.keyslots.is_empty());
        assert!(bundle.salts.is_empty());
        let mut redacted = 0;
        r.root.walk(|_, n, _| redacted += usize::from(n.body().is_redacted()));
        assert_eq!(redacted, 0);
        assert!(verify_signature(&e.gen.public(), r.merkle_root.as_bytes(), r.generator_signature.as_ref().unwrap()));
    }

    #[test]
    fn rule_marks_exactly_the_matched_nodes() {
        let mut e = env();
        let policy = RedactionPolicy::public().with_rule(&["**.licenseConcluded"], "role:legal").unwrap();
        let (bundle, r) = redact(vec![two_packages()], &policy, &e.pp, &e.gen, None, &mut e.rng).unwrap();
        let mut marked = Vec::new();
        r.root.walk(|id, n, _| {
            if n.body().is_redacted() {
                marked.push(id.to_string());
            }
        });
        assert_eq!(marked, ["r/1/2", "r/2/2"]);
        assert_eq!(r.root.keyslots.len(), 1);
        assert_eq!(bundle.salts.len(), 2);
    }

    #[test]
    fn distinct_trees_get_distinct_slots() {
        let mut e = env();
        let policy = RedactionPolicy::public()
            .with_rule(&["**.licenseConcluded"], "role:legal")
            .unwrap()
            .with_rule(&["**.versionInfo"], "role:scanner OR role:auditor")
            .unwrap();
        let (_, r) = redact(vec![two_packages()], &policy, &e.pp, &e.gen, None, &mut e.rng).unwrap();
        assert_eq!(r.root.keyslots.len(), 2);
    }

    #[test]
    fn nested_input_keeps_its_standalone_shape() {
        let mut e = env();
        let mut second = two_packages();
        second.root.index = Purl::parse("pkg:generic/dep@3").unwrap();
        let (_, r) =
            redact(vec![two_packages(), second], &RedactionPolicy::public(), &e.pp, &e.gen, None, &mut e.rng).unwrap();
        let nested = r.embedded_at(&NodeId(vec![3])).unwrap().unwrap();
        let hashes = redacted_pass(&r.root).unwrap();
        assert_eq!(hashes.nodes[&NodeId(vec![3])].redacted, nested.merkle_root);
    }

    #[test]
    fn sameness_honest_and_altered() {
        let mut e = env();
        let policy = RedactionPolicy::public().with_rule(&["**.licenseConcluded"], "role:legal").unwrap();
        let (bundle, r) = redact(vec![two_packages()], &policy, &e.pp, &e.gen, None, &mut e.rng).unwrap();
        let report = verify_sameness(&r.root, &bundle.tree, &bundle.salts).unwrap();
        assert!(report.is_all_match());
        assert_eq!(report.matched(), 10);

        for target in [vec![1, 2], vec![2, 0]] {
            let mut altered = bundle.tree.clone();
            let Node::Complex(c) = &mut altered.root.children[target[0] as usize] else { unreachable!() };
            let Node::Field(FieldNode { value, .. }) = &mut c.children[target[1] as usize] else { unreachable!() };
            value.push('!');
            let report = verify_sameness(&r.root, &altered, &bundle.salts).unwrap();
            let expected = vec![NodeId::root(), NodeId(vec![target[0]]), NodeId(target)];
            assert_eq!(report.mismatches(), expected);
        }

        let mut salts = bundle.salts.clone();
        salts.remove(&NodeId(vec![1, 2]));
        assert!(verify_sameness(&r.root, &bundle.tree, &salts).is_err());
    }

    #[test]
    fn countersign_checks_sameness() {
        let mut e = env();
        let policy = RedactionPolicy::public().with_rule(&["**.licenseConcluded"], "role:legal").unwrap();
        let (bundle, r) = redact(vec![two_packages()], &policy, &e.pp, &e.gen, None, &mut e.rng).unwrap();
        let signed = countersign(&r, &bundle, &e.prod, &e.gen.public()).unwrap();
        let counter = signed.producer_countersignature.as_ref().unwrap();
        let gen_sig = signed.generator_signature.as_ref().unwrap();
        assert!(verify_signature(&e.prod.public(), gen_sig, counter));
        assert!(!verify_signature(&e.gen.public(), gen_sig, counter));

        let mut tampered = r.clone();
        let RedactedNode::Complex { children, .. } = &mut tampered.root.children[1] else { unreachable!() };
        let Body::Redacted(s) = children[2].body_mut() else { unreachable!() };
        s.ciphertext[0] ^= 1;
        assert!(matches!(
            countersign(&tampered, &bundle, &e.prod, &e.gen.public()),
            Err(PipelineError::SamenessFailure { .. })
        ));

        let mut lying = bundle.clone();
        let Node::Complex(c) = &mut lying.tree.root.children[2] else { unreachable!() };
        c.children[2] = Node::field("licenseConcluded", "MIT");
        let err = countersign(&r, &lying, &e.prod, &e.gen.public()).unwrap_err();
        let PipelineError::SamenessFailure { mismatched, .. } = err else { panic!("{err}") };
        assert_eq!(mismatched.len(), 3);
    }

    #[test]
    fn composition_embeds_child_verbatim() {
        let mut e = env();
        let trust = e.trust();
        let policy = RedactionPolicy::public().with_rule(&["**.licenseConcluded"], "role:legal").unwrap();
        let (cb, child) = redact(vec![two_packages()], &policy, &e.pp, &e.gen, None, &mut e.rng).unwrap();
        let child = countersign(&child, &cb, &e.prod, &e.gen.public()).unwrap();

        let mut parent = two_packages();
        parent.root.index = Purl::parse("pkg:generic/app@2").unwrap();
        let (pb, composed) = compose(&parent, &child, &policy, &e.pp, &e.gen, &trust, None, &mut e.rng).unwrap();
        let at = NodeId(vec![3, 0]);
        let extracted = composed.embedded_at(&at).unwrap().unwrap();
        assert_eq!(extracted.merkle_root, child.merkle_root);
        assert_eq!(extracted.root.to_bytes(), child.root.to_bytes());
        assert_eq!(extracted.generator_signature, child.generator_signature);

        let report = verify_sameness(&composed.root, &pb.tree, &pb.salts).unwrap();
        assert_eq!(report.mismatched(), 0);
        assert_eq!(report.unverifiable(), child.root.node_count() - 1);
        let signed = countersign(&composed, &pb, &e.prod, &e.gen.public()).unwrap();
        assert!(signed.producer_countersignature.is_some());

        let mut unsigned = child.clone();
        unsigned.producer_countersignature = None;
        assert!(matches!(
            compose(&parent, &unsigned, &policy, &e.pp, &e.gen, &trust, None, &mut e.rng),
            Err(PipelineError::Untrusted(_))
        ));
    }
}
