//! The exchange pipeline: redaction and composition on the generator side,
//! countersigning on the producer side, and verified consumption.

mod consume;
mod container;
mod redact;

use ed25519_dalek::{Signer, Verifier};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::abkem::AbkemError;
use crate::encoding::{DecodeError, Hash256};
use crate::merkle::{redacted_pass, MerkleError, RedactedSbom};
use crate::policy::PolicyError;
use crate::sbom::{NodeId, SbomError};

pub use consume::{
    consume, consume_instrumented, verify_embedded, ConsumeStats, DecryptedView, Placeholder, PLACEHOLDER_PREFIX,
};
pub use container::{
    read_bundle, read_container, write_bundle, write_container, CONTAINER_VERSION, SIGNATURE_ALGORITHM,
};
pub use redact::{audit, compose, countersign, redact, PlainSbomBundle, EMBEDDED_ENVELOPE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("FAIL_UNTRUSTED_SBOM: {0}")]
    Untrusted(String),
    #[error("FAIL_GENERATOR_PRODUCER_LIED: {0}")]
    Lied(String),
    #[error("sameness check failed ({reason}); mismatching nodes: {}", list(.mismatched))]
    SamenessFailure { reason: String, mismatched: Vec<NodeId> },
    #[error("no input SBOM")]
    NoInput,
    #[error("malformed container: {0}")]
    Container(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Crypto(#[from] AbkemError),
    #[error(transparent)]
    Merkle(#[from] MerkleError),
    #[error(transparent)]
    Sbom(#[from] SbomError),
}

fn list(ids: &[NodeId]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl PipelineError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Untrusted(_) | PipelineError::Container(_) => "FAIL_UNTRUSTED_SBOM",
            PipelineError::Lied(_) => "FAIL_GENERATOR_PRODUCER_LIED",
            PipelineError::SamenessFailure { .. } => "SAMENESS_FAILURE",
            PipelineError::NoInput => "NO_INPUT",
            PipelineError::Policy(_) => "POLICY_SYNTAX",
            PipelineError::Crypto(_) => "CRYPTO_ERROR",
            PipelineError::Merkle(MerkleError::Decode(_)) => "FAIL_UNTRUSTED_SBOM",
            PipelineError::Merkle(_) => "MERKLE_ERROR",
            PipelineError::Sbom(_) => "MALFORMED_DOCUMENT",
        }
    }
}

impl From<DecodeError> for PipelineError {
    fn from(e: DecodeError) -> Self {
        PipelineError::Container(e.to_string())
    }
}

pub type VerifyingKey = ed25519_dalek::VerifyingKey;

/// An Ed25519 signing key (generator or producer).
#[derive(Clone)]
pub struct SigningKeyPair {
    inner: ed25519_dalek::SigningKey,
}

impl std::fmt::Debug for SigningKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigningKeyPair({})", hex::encode(self.public().as_bytes()))
    }
}

impl SigningKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        SigningKeyPair { inner: ed25519_dalek::SigningKey::generate(rng) }
    }

    pub fn from_secret_bytes(secret: &[u8; 32]) -> Self {
        SigningKeyPair { inner: ed25519_dalek::SigningKey::from_bytes(secret) }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.inner.to_bytes()
    }

    pub fn public(&self) -> VerifyingKey {
        self.inner.verifying_key()
    }

    pub fn sign(&self, msg: &[u8]) -> Vec<u8> {
        self.inner.sign(msg).to_bytes().to_vec()
    }
}

pub fn verify_signature(key: &VerifyingKey, msg: &[u8], sig: &[u8]) -> bool {
    match ed25519_dalek::Signature::from_slice(sig) {
        Ok(s) => key.verify(msg, &s).is_ok(),
        Err(_) => false,
    }
}

pub fn parse_verifying_key(bytes: &[u8]) -> Option<VerifyingKey> {
    VerifyingKey::from_bytes(bytes.try_into().ok()?).ok()
}

/// Public keys a consumer or distributor trusts.
#[derive(Clone, Debug)]
pub struct TrustedKeys {
    pub generator: VerifyingKey,
    pub producer: VerifyingKey,
}

/// Checks both signatures over the recomputed root, countersignature first.
/// Returns the recomputed root.
pub fn verify_signatures(sbom: &RedactedSbom, trust: &TrustedKeys) -> Result<Hash256, PipelineError> {
    let (Some(gen_sig), Some(counter)) = (&sbom.generator_signature, &sbom.producer_countersignature) else {
        return Err(PipelineError::Untrusted("missing signature or countersignature".into()));
    };
    if !verify_signature(&trust.producer, gen_sig, counter) {
        return Err(PipelineError::Untrusted("producer countersignature does not verify".into()));
    }
    check_generator_signature(sbom, &trust.generator)
}

fn check_generator_signature(sbom: &RedactedSbom, key: &VerifyingKey) -> Result<Hash256, PipelineError> {
    let Some(gen_sig) = &sbom.generator_signature else {
        return Err(PipelineError::Untrusted("missing generator signature".into()));
    };
    let root = redacted_pass(&sbom.root).map_err(|e| PipelineError::Untrusted(e.to_string()))?.merkle_root;
    if root != sbom.merkle_root || !verify_signature(key, root.as_bytes(), gen_sig) {
        return Err(PipelineError::Untrusted("generator signature does not cover the tree".into()));
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn signatures_bind_key_and_message() {
        let mut rng = StdRng::seed_from_u64(1);
        let a = SigningKeyPair::generate(&mut rng);
        let b = SigningKeyPair::generate(&mut rng);
        let sig = a.sign(b"root");
        assert!(verify_signature(&a.public(), b"root", &sig));
        assert!(!verify_signature(&b.public(), b"root", &sig));
        assert!(!verify_signature(&a.public(), b"roof", &sig));
        assert!(!verify_signature(&a.public(), b"root", &sig[1..]));
        let again = SigningKeyPair::from_secret_bytes(&a.secret_bytes());
        assert_eq!(again.public(), a.public());
    }
}
