//! Reference documents and policies, plus a seeded generator for synthetic
//! SPDX and CycloneDX documents.

use std::io;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use crate::abkem::{encrypt_node, PolicyKeySlot, SymmetricKey};
use crate::encoding::lp_concat;
use crate::merkle::{commit, Body, RedactedNode, RedactedSbomNode, Sealed};
use crate::policy::{AccessTree, PathSelector, PolicyError, RedactionPolicy, Rule};
use crate::sbom::SbomTree;

/// SPDX 2.3 document for the GNU `hello` package: one package, three files,
/// GPL-3.0-or-later throughout.
pub const HELLO_SPDX: &str = include_str!("../fixtures/hello.spdx.json");

/// Redacts claims identifying dependencies.
pub const IP_POLICY: &str = include_str!("../fixtures/ip.petra-policy.json");

/// Redacts vulnerability and version claims.
pub const WEAKNESSES_POLICY: &str = include_str!("../fixtures/weaknesses.petra-policy.json");

const LICENSES: &str = include_str!("../fixtures/licenses.txt");

/// 677 SPDX license identifiers.
pub fn spdx_licenses() -> Vec<&'static str> {
    LICENSES.lines().filter(|l| !l.is_empty()).collect()
}

const WORDS: &[&str] = &[
    "alpha", "bravo", "cargo", "delta", "ember", "flint", "garnet", "harbor", "iris", "juniper", "kestrel", "lumen",
    "maple", "nimbus", "onyx", "pylon", "quartz", "raven", "sable", "tundra", "umber", "vortex", "willow", "yarrow",
];

fn name(rng: &mut StdRng) -> String {
    format!("{}-{}{}", WORDS[rng.gen_range(0..WORDS.len())], WORDS[rng.gen_range(0..WORDS.len())], rng.gen_range(0..100))
}

fn version(rng: &mut StdRng) -> String {
    format!("{}.{}.{}", rng.gen_range(0..5), rng.gen_range(0..20), rng.gen_range(0..30))
}

fn hexstr(rng: &mut StdRng, bytes: usize) -> String {
    let v: Vec<u8> = (0..bytes).map(|_| rng.gen()).collect();
    hex::encode(v)
}

/// A pretty-printed SPDX 2.3 document with `packages` packages, each with
/// checksums, a purl reference and a dependency relationship.
pub fn synthetic_spdx(packages: usize, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let licenses = spdx_licenses();
    let doc_name = name(&mut rng);
    let mut pkgs = Vec::new();
    let mut rels = vec![json!({
        "spdxElementId": "SPDXRef-DOCUMENT",
        "relationshipType": "DESCRIBES",
        "relatedSpdxElement": "SPDXRef-Package-0"
    })];
    for i in 0..packages {
        let n = name(&mut rng);
        let v = version(&mut rng);
        let lic = licenses[rng.gen_range(0..licenses.len())];
        pkgs.push(json!({
            "SPDXID": format!("SPDXRef-Package-{i}"),
            "name": n,
            "versionInfo": v,
            "supplier": format!("Organization: {} Inc.", WORDS[rng.gen_range(0..WORDS.len())]),
            "downloadLocation": format!("https://example.org/{n}/{v}.tar.gz"),
            "filesAnalyzed": false,
            "checksums": [
                {"algorithm": "SHA256", "checksumValue": hexstr(&mut rng, 32)}
            ],
            "licenseConcluded": lic,
            "licenseDeclared": lic,
            "copyrightText": "NOASSERTION",
            "externalRefs": [{
                "referenceCategory": "PACKAGE-MANAGER",
                "referenceType": "purl",
                "referenceLocator": format!("pkg:generic/{n}@{v}")
            }]
        }));
        if i > 0 {
            rels.push(json!({
                "spdxElementId": "SPDXRef-Package-0",
                "relationshipType": "DEPENDS_ON",
                "relatedSpdxElement": format!("SPDXRef-Package-{i}")
            }));
        }
    }
    let doc = json!({
        "spdxVersion": "SPDX-2.3",
        "dataLicense": "CC0-1.0",
        "SPDXID": "SPDXRef-DOCUMENT",
        "name": doc_name,
        "documentNamespace": format!("https://example.org/spdx/{doc_name}-{}", hexstr(&mut rng, 8)),
        "creationInfo": {
            "created": "2025-06-01T00:00:00Z",
            "creators": ["Tool: synthetic-generator"]
        },
        "packages": pkgs,
        "relationships": rels
    });
    serde_json::to_string_pretty(&doc).expect("json")
}

/// A pretty-printed CycloneDX 1.5 document with `components` components.
pub fn synthetic_cyclonedx(components: usize, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let licenses = spdx_licenses();
    let top = name(&mut rng);
    let mut comps = Vec::new();
    let mut deps = Vec::new();
    for _ in 0..components {
        let n = name(&mut rng);
        let v = version(&mut rng);
        let purl = format!("pkg:generic/{n}@{v}");
        comps.push(json!({
            "type": "library",
            "bom-ref": purl,
            "name": n,
            "version": v,
            "purl": purl,
            "hashes": [{"alg": "SHA-256", "content": hexstr(&mut rng, 32)}],
            "licenses": [{"license": {"id": licenses[rng.gen_range(0..licenses.len())]}}]
        }));
        deps.push(Value::String(purl));
    }
    let doc = json!({
        "bomFormat": "CycloneDX",
        "specVersion": "1.5",
        "serialNumber": format!("urn:uuid:{}", hexstr(&mut rng, 16)),
        "version": 1,
        "metadata": {
            "timestamp": "2025-06-01T00:00:00Z",
            "component": {"type": "application", "name": top, "version": "1.0.0"}
        },
        "components": comps,
        "dependencies": [{"ref": format!("pkg:generic/{top}@1.0.0"), "dependsOn": deps}]
    });
    serde_json::to_string_pretty(&doc).expect("json")
}

/// Writes `files` synthetic documents (alternating SPDX and CycloneDX, 2 to
/// 120 packages) into `dir`.
pub fn write_corpus(dir: &Path, files: usize, seed: u64) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(files);
    for i in 0..files {
        let n = rng.gen_range(2..=120);
        let s = rng.gen();
        let (file, body) = if i % 2 == 0 {
            (format!("synthetic-{i:02}.spdx.json"), synthetic_spdx(n, s))
        } else {
            (format!("synthetic-{i:02}.cdx.json"), synthetic_cyclonedx(n, s))
        };
        let p = dir.join(file);
        std::fs::write(&p, body)?;
        out.push(p);
    }
    Ok(out)
}

/// Every distinct node path gets its own attribute.
pub fn complicated_policy(tree: &SbomTree) -> Result<RedactionPolicy, PolicyError> {
    let mut paths: Vec<String> = Vec::new();
    tree.walk(|v| {
        let p = v.path.iter().map(|s| crate::sbom::base_name(s)).collect::<Vec<_>>().join(".");
        if !paths.contains(&p) {
            paths.push(p);
        }
    });
    let mut policy = RedactionPolicy::public();
    for (i, p) in paths.iter().enumerate() {
        let Ok(sel) = PathSelector::parse(p) else { continue };
        policy.rules.push(Rule { paths: vec![sel], access: AccessTree::leaf(format!("node:n{i}"))? });
    }
    Ok(policy)
}

/// Packages and components under one attribute, everything else under another.
pub fn simplistic_policy() -> RedactionPolicy {
    RedactionPolicy::public()
        .with_rule(&["**.package.**", "**.component.**"], "group:a")
        .and_then(|p| p.with_rule(&["**"], "group:b"))
        .expect("static policy")
}

/// Fills every byte with one constant. Only for fixed test vectors.
struct ConstRng(u8);

impl rand::RngCore for ConstRng {
    fn next_u32(&mut self) -> u32 {
        u32::from_ne_bytes([self.0; 4])
    }
    fn next_u64(&mut self) -> u64 {
        u64::from_ne_bytes([self.0; 8])
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        dest.fill(self.0);
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        dest.fill(self.0);
        Ok(())
    }
}

impl rand::CryptoRng for ConstRng {}

/// A three-node redacted tree built from fixed inputs, for cross-checking
/// hash vectors: an SBOM root (`pkg:generic/demo@1.0`, seed `11..11`, one
/// slot for `role:auditor` with capsule bytes `fixed-capsule`), a sealed
/// field `license=MIT` (salt `22..22`, nonce `33..33`, AES key `44..44`)
/// and a public, childless complex node `package`.
pub fn vector_tree() -> RedactedSbomNode {
    let access = AccessTree::leaf("role:auditor").expect("valid attribute");
    let slot = PolicyKeySlot { policy_id: access.policy_id(), access, encapsulated_key: b"fixed-capsule".to_vec() };
    let salt = [0x22; 32];
    let field = lp_concat([b"license".as_slice(), b"MIT"]);
    let ct = encrypt_node(&SymmetricKey([0x44; 32]), slot.policy_id, &salt, &field, &mut ConstRng(0x33));
    RedactedSbomNode {
        salt_seed: [0x11; 32],
        keyslots: vec![slot],
        meta: Body::Public(lp_concat([b"pkg:generic/demo@1.0".as_slice(), b"format=native"])),
        children: vec![
            RedactedNode::Field(Body::Redacted(Sealed {
                slot: 0,
                nonce: ct.nonce,
                ciphertext: ct.ciphertext,
                plain_hash: commit(&field, &salt).digest,
            })),
            RedactedNode::Complex { body: Body::Public(lp_concat([b"package".as_slice()])), children: Vec::new() },
        ],
        attestation: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy;
    use crate::sbom::{parse_sbom, SourceFormat};

    #[test]
    fn fixtures_parse() {
        assert_eq!(spdx_licenses().len(), 677);
        assert!(spdx_licenses().contains(&"GPL-3.0-or-later"));
        parse_policy(IP_POLICY.as_bytes()).unwrap();
        parse_policy(WEAKNESSES_POLICY.as_bytes()).unwrap();
        let hello = parse_sbom(HELLO_SPDX.as_bytes(), SourceFormat::Spdx).unwrap();
        assert_eq!(hello.root.index.as_str(), "pkg:generic/hello@2.10");
    }

    #[test]
    fn generator_is_seeded() {
        assert_eq!(synthetic_spdx(3, 1), synthetic_spdx(3, 1));
        assert_ne!(synthetic_spdx(3, 1), synthetic_spdx(3, 2));
        let t = parse_sbom(synthetic_spdx(5, 9).as_bytes(), SourceFormat::Spdx).unwrap();
        let packages = t.root.children.iter().filter(|n| n.segment() == "package").count();
        assert_eq!(packages, 5);
        let c = parse_sbom(synthetic_cyclonedx(4, 9).as_bytes(), SourceFormat::CycloneDx).unwrap();
        assert_eq!(c.root.children.iter().filter(|n| n.segment() == "component").count(), 4);
        complicated_policy(&t).unwrap();
        simplistic_policy();
    }
}
