//! Attribute-based key encapsulation.
//!
//! Every distinct access tree in a redacted SBOM gets a fresh 256-bit
//! symmetric key. That key is wrapped under a CP-ABE ciphertext for the tree
//! (a [`PolicyKeySlot`]) and used with AES-256-GCM to encrypt the nodes bound
//! to that tree ([`encrypt_node`]).
//!
//! Two backends share one byte-level interface:
//! * [`Scheme::Bsw07`]: ciphertext-policy ABE over BLS12-381 (the default);
//! * [`Scheme::InsecureTest`]: a hash-based stand-in that enforces the same
//!   predicate semantics without pairings. It offers no confidentiality
//!   against anyone holding the public parameters and exists only for fast
//!   tests.
//!
//! Keys and parameters travel as blobs: `"PABE" || scheme id || kind || payload`.

mod aead;
pub mod bsw;
mod insecure;

use std::fmt;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::encoding::{put_lp, DecodeError, Hash256, Reader};
use crate::policy::{AccessTree, AttributeSet};

pub use aead::{decrypt_node, encrypt_node, NodeCiphertext, NONCE_LEN};

pub const BLOB_MAGIC: &[u8; 4] = b"PABE";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbkemError {
    #[error("attribute key requested for an empty attribute set")]
    EmptyAttributeSet,
    #[error("unsupported security level {0} (only 128 is available)")]
    UnsupportedSecurityLevel(u32),
    #[error("key slot cannot be opened with this key")]
    DecapsulationFailure,
    #[error("node ciphertext failed authentication")]
    AuthenticationFailure,
    #[error("objects belong to different schemes ({0:?} vs {1:?})")]
    SchemeMismatch(Scheme, Scheme),
    #[error("malformed {what}: {source}")]
    Malformed { what: &'static str, source: DecodeError },
}

fn malformed(what: &'static str) -> impl FnOnce(DecodeError) -> AbkemError {
    move |source| AbkemError::Malformed { what, source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Bsw07,
    InsecureTest,
}

impl Scheme {
    pub fn id(self) -> u8 {
        match self {
            Scheme::Bsw07 => 0x01,
            Scheme::InsecureTest => 0xF0,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0x01 => Some(Scheme::Bsw07),
            0xF0 => Some(Scheme::InsecureTest),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bsw07 => "bsw07-bls12-381",
            Scheme::InsecureTest => "insecure-test",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "bsw07" | "bsw07-bls12-381" => Some(Scheme::Bsw07),
            "insecure-test" => Some(Scheme::InsecureTest),
            _ => None,
        }
    }

    fn backend(self) -> &'static dyn KemBackend {
        match self {
            Scheme::Bsw07 => &bsw::Bsw07,
            Scheme::InsecureTest => &insecure::InsecureTest,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Byte-level contract of a CP-ABE backend. Each method receives only its
/// scheme's payloads; blob framing is handled here.
pub(crate) trait KemBackend: Sync {
    fn setup(&self, rng: &mut dyn RngCore) -> (Vec<u8>, Vec<u8>);
    fn check_params(&self, pp: &[u8]) -> Result<(), DecodeError>;
    fn keygen(&self, mk: &[u8], attrs: &AttributeSet, rng: &mut dyn RngCore) -> Result<Vec<u8>, DecodeError>;
    /// Returns the encapsulated 256-bit key and its ciphertext.
    fn encapsulate(&self, pp: &[u8], access: &AccessTree, rng: &mut dyn RngCore) -> Result<([u8; 32], Vec<u8>), DecodeError>;
    fn decapsulate(
        &self,
        pp: &[u8],
        access: &AccessTree,
        ct: &[u8],
        key: &[u8],
        attrs: &AttributeSet,
    ) -> Result<Option<[u8; 32]>, DecodeError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
enum BlobKind {
    Params = b'P',
    Master = b'M',
    UserKey = b'K',
    Capsule = b'C',
}

fn frame(scheme: Scheme, kind: BlobKind, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 6);
    out.extend_from_slice(BLOB_MAGIC);
    out.push(scheme.id());
    out.push(kind as u8);
    out.extend_from_slice(payload);
    out
}

fn unframe<'a>(bytes: &'a [u8], kind: BlobKind, what: &'static str) -> Result<(Scheme, &'a [u8]), AbkemError> {
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(malformed(what))? != BLOB_MAGIC {
        return Err(malformed(what)(DecodeError::Invalid("blob magic")));
    }
    let scheme = Scheme::from_id(r.u8().map_err(malformed(what))?)
        .ok_or_else(|| malformed(what)(DecodeError::Invalid("scheme id")))?;
    if r.u8().map_err(malformed(what))? != kind as u8 {
        return Err(malformed(what)(DecodeError::Invalid("blob kind")));
    }
    let rest = r.take(r.remaining()).expect("remaining bytes");
    Ok((scheme, rest))
}

/// Public encryption parameters.
#[derive(Clone, PartialEq, Eq)]
pub struct PublicParams {
    scheme: Scheme,
    payload: Vec<u8>,
}

/// Master secret of the key service. Only the key service persists it, via
/// [`MasterKey::to_storage_bytes`]; it has no serde implementation.
#[derive(Clone)]
pub struct MasterKey {
    scheme: Scheme,
    payload: Vec<u8>,
}

/// A consumer's decryption key together with the attributes it was issued for.
#[derive(Clone, PartialEq, Eq)]
pub struct AttributeSecretKey {
    scheme: Scheme,
    attributes: AttributeSet,
    material: Vec<u8>,
}

/// A CP-ABE encapsulation of one symmetric key under one access tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyKeySlot {
    pub policy_id: Hash256,
    pub access: AccessTree,
    /// Framed capsule blob.
    pub encapsulated_key: Vec<u8>,
}

/// 256-bit AES key.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey(pub [u8; 32]);

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

impl fmt::Debug for PublicParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicParams({}, {} bytes)", self.scheme, self.payload.len())
    }
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MasterKey({}, ..)", self.scheme)
    }
}

impl fmt::Debug for AttributeSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AttributeSecretKey")
            .field("scheme", &self.scheme)
            .field("attributes", &self.attributes)
            .finish_non_exhaustive()
    }
}

impl PublicParams {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        frame(self.scheme, BlobKind::Params, &self.payload)
    }

    /// Parses and validates (group membership, non-degenerate elements).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbkemError> {
        let (scheme, payload) = unframe(bytes, BlobKind::Params, "public parameters")?;
        scheme.backend().check_params(payload).map_err(malformed("public parameters"))?;
        Ok(PublicParams { scheme, payload: payload.to_vec() })
    }

    /// SHA-256 of the blob, used to pin parameters in containers and ledgers.
    pub fn fingerprint(&self) -> Hash256 {
        crate::encoding::sha256(&self.to_bytes())
    }
}

impl MasterKey {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn to_storage_bytes(&self) -> Vec<u8> {
        frame(self.scheme, BlobKind::Master, &self.payload)
    }

    pub fn from_storage_bytes(bytes: &[u8]) -> Result<Self, AbkemError> {
        let (scheme, payload) = unframe(bytes, BlobKind::Master, "master key")?;
        Ok(MasterKey { scheme, payload: payload.to_vec() })
    }
}

impl AttributeSecretKey {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn attributes(&self) -> &AttributeSet {
        &self.attributes
    }

    /// Scheme-specific key material, without the attribute list.
    pub fn material(&self) -> &[u8] {
        &self.material
    }

    /// Reassembles a key from parts. Nothing checks that the material
    /// belongs to the attributes; decapsulation simply fails if it does not.
    pub fn from_parts(scheme: Scheme, attributes: AttributeSet, material: Vec<u8>) -> Self {
        AttributeSecretKey { scheme, attributes, material }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        let attrs: Vec<&str> = self.attributes.iter().collect();
        crate::encoding::put_u32(&mut payload, attrs.len() as u32);
        for a in attrs {
            put_lp(&mut payload, a.as_bytes());
        }
        put_lp(&mut payload, &self.material);
        frame(self.scheme, BlobKind::UserKey, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbkemError> {
        const WHAT: &str = "attribute key";
        let (scheme, payload) = unframe(bytes, BlobKind::UserKey, WHAT)?;
        let mut r = Reader::new(payload);
        let n = r.u32().map_err(malformed(WHAT))?;
        let mut attributes = AttributeSet::new();
        for _ in 0..n {
            let a = r.lp_str().map_err(malformed(WHAT))?;
            attributes
                .insert(a)
                .map_err(|_| malformed(WHAT)(DecodeError::Invalid("attribute")))?;
        }
        let material = r.lp().map_err(malformed(WHAT))?.to_vec();
        r.finish().map_err(malformed(WHAT))?;
        Ok(AttributeSecretKey { scheme, attributes, material })
    }

    pub fn fingerprint(&self) -> Hash256 {
        crate::encoding::sha256(&self.to_bytes())
    }
}

impl PolicyKeySlot {
    /// `policy_id || lp(access encoding) || lp(capsule)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(self.policy_id.as_bytes());
        put_lp(&mut out, &self.access.encode());
        put_lp(&mut out, &self.encapsulated_key);
        out
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, AbkemError> {
        const WHAT: &str = "key slot";
        let policy_id = r.hash().map_err(malformed(WHAT))?;
        let access = AccessTree::decode(r.lp().map_err(malformed(WHAT))?).map_err(malformed(WHAT))?;
        let encapsulated_key = r.lp().map_err(malformed(WHAT))?.to_vec();
        if access.policy_id() != policy_id {
            return Err(malformed(WHAT)(DecodeError::Invalid("policy id does not match access tree")));
        }
        Ok(PolicyKeySlot { policy_id, access, encapsulated_key })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbkemError> {
        let mut r = Reader::new(bytes);
        let slot = PolicyKeySlot::decode_from(&mut r)?;
        r.finish().map_err(malformed("key slot"))?;
        Ok(slot)
    }

    pub fn scheme(&self) -> Option<Scheme> {
        (self.encapsulated_key.len() > 4).then(|| Scheme::from_id(self.encapsulated_key[4])).flatten()
    }
}

/// Generates fresh public parameters and a master key.
pub fn abe_setup<R: RngCore + CryptoRng>(
    scheme: Scheme,
    security_bits: u32,
    rng: &mut R,
) -> Result<(PublicParams, MasterKey), AbkemError> {
    if security_bits != 128 {
        return Err(AbkemError::UnsupportedSecurityLevel(security_bits));
    }
    let (pp, mk) = scheme.backend().setup(rng);
    Ok((PublicParams { scheme, payload: pp }, MasterKey { scheme, payload: mk }))
}

/// Issues a key for exactly `attrs`.
pub fn abe_keygen<R: RngCore + CryptoRng>(
    mk: &MasterKey,
    attrs: &AttributeSet,
    rng: &mut R,
) -> Result<AttributeSecretKey, AbkemError> {
    if attrs.is_empty() {
        return Err(AbkemError::EmptyAttributeSet);
    }
    let material = mk.scheme.backend().keygen(&mk.payload, attrs, rng).map_err(malformed("master key"))?;
    Ok(AttributeSecretKey { scheme: mk.scheme, attributes: attrs.clone(), material })
}

/// Draws a fresh symmetric key and wraps it under `access`.
pub fn encapsulate<R: RngCore + CryptoRng>(
    pp: &PublicParams,
    access: &AccessTree,
    rng: &mut R,
) -> Result<(SymmetricKey, PolicyKeySlot), AbkemError> {
    let (key, ct) = pp
        .scheme
        .backend()
        .encapsulate(&pp.payload, access, rng)
        .map_err(malformed("public parameters"))?;
    let slot = PolicyKeySlot {
        policy_id: access.policy_id(),
        access: access.clone(),
        encapsulated_key: frame(pp.scheme, BlobKind::Capsule, &ct),
    };
    Ok((SymmetricKey(key), slot))
}

/// Recovers the slot's symmetric key. Fails with `DecapsulationFailure` when
/// the key's attributes do not satisfy the slot's tree or the slot is corrupt.
pub fn decapsulate(
    pp: &PublicParams,
    slot: &PolicyKeySlot,
    sk: &AttributeSecretKey,
) -> Result<SymmetricKey, AbkemError> {
    if sk.scheme != pp.scheme {
        return Err(AbkemError::SchemeMismatch(pp.scheme, sk.scheme));
    }
    let (scheme, ct) =
        unframe(&slot.encapsulated_key, BlobKind::Capsule, "key slot").map_err(|_| AbkemError::DecapsulationFailure)?;
    if scheme != pp.scheme || slot.access.policy_id() != slot.policy_id {
        return Err(AbkemError::DecapsulationFailure);
    }
    match pp.scheme.backend().decapsulate(&pp.payload, &slot.access, ct, &sk.material, &sk.attributes) {
        Ok(Some(k)) => Ok(SymmetricKey(k)),
        Ok(None) | Err(_) => Err(AbkemError::DecapsulationFailure),
    }
}
