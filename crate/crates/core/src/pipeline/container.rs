//! File formats: the `.petra` container and the `.petra-salts` plaintext
//! bundle. Both are JSON envelopes around base64 canonical bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoding::{b64, Hash256};
use crate::merkle::{Body, RedactedSbom, RedactedSbomNode};
use crate::sbom::{parse_native, serialize_tree, NodeId};

use super::{PipelineError, PlainSbomBundle};

pub const CONTAINER_VERSION: u32 = 1;
pub const SIGNATURE_ALGORITHM: &str = "ed25519";

#[derive(Serialize, Deserialize)]
struct SlotSummary {
    policy_id: Hash256,
    access: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    version: u32,
    signature_algorithm: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    index: Option<String>,
    merkle_root: Hash256,
    #[serde(with = "opt_b64", default)]
    generator_signature: Option<Vec<u8>>,
    #[serde(with = "opt_b64", default)]
    producer_countersignature: Option<Vec<u8>>,
    /// Informational; the capsules themselves live in the tree bytes.
    keyslots: Vec<SlotSummary>,
    #[serde(with = "b64")]
    tree: Vec<u8>,
}

mod opt_b64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&crate::encoding::b64_encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| crate::encoding::b64_decode(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

fn public_index(root: &RedactedSbomNode) -> Option<String> {
    let Body::Public(p) = &root.meta else { return None };
    crate::encoding::Reader::new(p).lp_str().ok()
}

pub fn write_container(sbom: &RedactedSbom) -> Vec<u8> {
    let env = Envelope {
        version: CONTAINER_VERSION,
        signature_algorithm: SIGNATURE_ALGORITHM.into(),
        index: public_index(&sbom.root),
        merkle_root: sbom.merkle_root,
        generator_signature: sbom.generator_signature.clone(),
        producer_countersignature: sbom.producer_countersignature.clone(),
        keyslots: sbom
            .root
            .keyslots
            .iter()
            .map(|s| SlotSummary { policy_id: s.policy_id, access: s.access.to_string() })
            .collect(),
        tree: sbom.root.to_bytes(),
    };
    serde_json::to_vec_pretty(&env).expect("envelope serializes")
}

/// Parses a container. The merkle root is taken as claimed; verification
/// recomputes it.
pub fn read_container(bytes: &[u8]) -> Result<RedactedSbom, PipelineError> {
    let env: Envelope = serde_json::from_slice(bytes).map_err(|e| PipelineError::Container(e.to_string()))?;
    if env.version != CONTAINER_VERSION {
        return Err(PipelineError::Container(format!("unsupported version {}", env.version)));
    }
    if env.signature_algorithm != SIGNATURE_ALGORITHM {
        return Err(PipelineError::Container(format!("unsupported signature algorithm {}", env.signature_algorithm)));
    }
    Ok(RedactedSbom {
        root: RedactedSbomNode::from_bytes(&env.tree)?,
        merkle_root: env.merkle_root,
        generator_signature: env.generator_signature,
        producer_countersignature: env.producer_countersignature,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile {
    version: u32,
    merkle_root: Hash256,
    #[serde(with = "b64")]
    tree: Vec<u8>,
    salts: BTreeMap<String, String>,
}

/// Writes the producer-only bundle; `merkle_root` names the container it
/// belongs to.
pub fn write_bundle(bundle: &PlainSbomBundle, merkle_root: Hash256) -> Vec<u8> {
    let file = BundleFile {
        version: CONTAINER_VERSION,
        merkle_root,
        tree: serialize_tree(&bundle.tree),
        salts: bundle.salts.iter().map(|(id, s)| (id.to_string(), hex::encode(s))).collect(),
    };
    serde_json::to_vec_pretty(&file).expect("bundle serializes")
}

pub fn read_bundle(bytes: &[u8]) -> Result<(PlainSbomBundle, Hash256), PipelineError> {
    let bad = |what: &str| PipelineError::Container(format!("bad salt bundle: {what}"));
    let file: BundleFile = serde_json::from_slice(bytes).map_err(|e| bad(&e.to_string()))?;
    let tree = parse_native(&file.tree)?;
    let mut salts = BTreeMap::new();
    for (id, s) in file.salts {
        let id = NodeId::parse(&id).ok_or_else(|| bad("node id"))?;
        let salt: [u8; 32] = hex::decode(s).ok().and_then(|v| v.try_into().ok()).ok_or_else(|| bad("salt"))?;
        salts.insert(id, salt);
    }
    Ok((PlainSbomBundle { tree, salts }, file.merkle_root))
}
