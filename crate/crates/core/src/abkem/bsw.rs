//! Bethencourt-Sahai-Waters CP-ABE on BLS12-381, used as a KEM.
//!
//! Asymmetric variant: ciphertext components that the original scheme puts
//! in one group are split between G1 and G2 so that every pairing has one
//! argument from each.
//!
//! ```text
//! PP  = (g1, g2, h = g1^β, Y = e(g1, g2)^α)
//! MK  = (g1, g2, β, g2^α)
//! SK  = D = g2^((α + r)/β),  per attribute j: D_j = g2^r · H(j)^r_j,  D'_j = g1^r_j
//! CT  = C~ = M · Y^s,  C = h^s,  per leaf y: C_y = g1^q_y(0),  C'_y = H(att(y))^q_y(0)
//! ```
//!
//! The KEM key is `SHA-256(domain || M)` for a uniformly random `M` in GT.
//! Group arithmetic on GT is written additively by arkworks.

use ark_bls12_381::{g2, Bls12_381, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::hashing::curve_maps::wb::WBMap;
use ark_ec::hashing::map_to_curve_hasher::MapToCurveBasedHasher;
use ark_ec::hashing::HashToCurve;
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{CurveGroup, Group};
use ark_ff::field_hashers::DefaultFieldHasher;
use ark_ff::{Field, UniformRand, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::encoding::{put_lp, put_u32, DecodeError, Reader};
use crate::policy::{AccessTree, AttributeSet};

use super::KemBackend;

type Gt = PairingOutput<Bls12_381>;

const HASH_DST: &[u8] = b"PETRA-BSW07-V01-CS01-with-BLS12381G2_XMD:SHA-256_SSWU_RO_";
const KDF_DOMAIN: &[u8] = b"petra-bsw07-kem-v1";
const CONFIRM_DOMAIN: &[u8] = b"petra-bsw07-confirm-v1";

pub(crate) struct Bsw07;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub g1: G1Affine,
    pub g2: G2Affine,
    pub h: G1Affine,
    pub y: Gt,
}

#[derive(Clone)]
pub struct MasterSecret {
    pub g1: G1Affine,
    pub g2: G2Affine,
    pub beta: Fr,
    pub g2_alpha: G2Affine,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyComponent {
    pub attribute: String,
    pub d: G2Affine,
    pub d_prime: G1Affine,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserKey {
    pub d: G2Affine,
    pub components: Vec<KeyComponent>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafCiphertext {
    pub c: G1Affine,
    pub c_prime: G2Affine,
}

/// Leaves are stored in left-to-right order of the access tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    pub c_tilde: Gt,
    pub c: G1Affine,
    pub leaves: Vec<LeafCiphertext>,
}

fn put_elem<T: CanonicalSerialize>(buf: &mut Vec<u8>, e: &T) {
    e.serialize_compressed(&mut *buf).expect("writing to a Vec cannot fail");
}

fn read_elem<T: CanonicalDeserialize>(r: &mut Reader<'_>, len: usize) -> Result<T, DecodeError> {
    T::deserialize_compressed(r.take(len)?).map_err(|_| DecodeError::Invalid("group element"))
}

const G1_LEN: usize = 48;
const G2_LEN: usize = 96;
const GT_LEN: usize = 576;
const FR_LEN: usize = 32;

impl PublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        put_elem(&mut buf, &self.g1);
        put_elem(&mut buf, &self.g2);
        put_elem(&mut buf, &self.h);
        put_elem(&mut buf, &self.y);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let pk = PublicKey {
            g1: read_elem(&mut r, G1_LEN)?,
            g2: read_elem(&mut r, G2_LEN)?,
            h: read_elem(&mut r, G1_LEN)?,
            y: read_elem(&mut r, GT_LEN)?,
        };
        r.finish()?;
        if pk.g1.infinity || pk.g2.infinity || pk.h.infinity || pk.y.is_zero() {
            return Err(DecodeError::Invalid("degenerate public parameters"));
        }
        Ok(pk)
    }
}

impl MasterSecret {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        put_elem(&mut buf, &self.g1);
        put_elem(&mut buf, &self.g2);
        put_elem(&mut buf, &self.beta);
        put_elem(&mut buf, &self.g2_alpha);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let mk = MasterSecret {
            g1: read_elem(&mut r, G1_LEN)?,
            g2: read_elem(&mut r, G2_LEN)?,
            beta: read_elem(&mut r, FR_LEN)?,
            g2_alpha: read_elem(&mut r, G2_LEN)?,
        };
        r.finish()?;
        if mk.beta.is_zero() {
            return Err(DecodeError::Invalid("zero master exponent"));
        }
        Ok(mk)
    }
}

impl UserKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        put_elem(&mut buf, &self.d);
        put_u32(&mut buf, self.components.len() as u32);
        for c in &self.components {
            put_lp(&mut buf, c.attribute.as_bytes());
            put_elem(&mut buf, &c.d);
            put_elem(&mut buf, &c.d_prime);
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let d = read_elem(&mut r, G2_LEN)?;
        let n = r.u32()? as usize;
        let mut components = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            components.push(KeyComponent {
                attribute: r.lp_str()?,
                d: read_elem(&mut r, G2_LEN)?,
                d_prime: read_elem(&mut r, G1_LEN)?,
            });
        }
        r.finish()?;
        Ok(UserKey { d, components })
    }

    fn component(&self, attribute: &str) -> Option<&KeyComponent> {
        self.components.iter().find(|c| c.attribute == attribute)
    }
}

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        put_elem(&mut buf, &self.c_tilde);
        put_elem(&mut buf, &self.c);
        put_u32(&mut buf, self.leaves.len() as u32);
        for l in &self.leaves {
            put_elem(&mut buf, &l.c);
            put_elem(&mut buf, &l.c_prime);
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let c_tilde = read_elem(&mut r, GT_LEN)?;
        let c = read_elem(&mut r, G1_LEN)?;
        let n = r.u32()? as usize;
        if n > r.remaining() / (G1_LEN + G2_LEN) {
            return Err(DecodeError::Truncated);
        }
        let mut leaves = Vec::with_capacity(n);
        for _ in 0..n {
            leaves.push(LeafCiphertext { c: read_elem(&mut r, G1_LEN)?, c_prime: read_elem(&mut r, G2_LEN)? });
        }
        r.finish()?;
        Ok(Ciphertext { c_tilde, c, leaves })
    }
}

/// Hashes an attribute string into G2.
pub fn hash_attribute(attribute: &str) -> G2Affine {
    let hasher = MapToCurveBasedHasher::<G2Projective, DefaultFieldHasher<Sha256, 128>, WBMap<g2::Config>>::new(
        HASH_DST,
    )
    .expect("static domain separation tag is valid");
    hasher.hash(attribute.as_bytes()).expect("hash-to-curve is total on byte strings")
}

fn nonzero_scalar(rng: &mut dyn RngCore) -> Fr {
    loop {
        let x = Fr::rand(rng);
        if !x.is_zero() {
            return x;
        }
    }
}

pub fn setup(rng: &mut dyn RngCore) -> (PublicKey, MasterSecret) {
    let g1 = (G1Projective::generator() * nonzero_scalar(rng)).into_affine();
    let g2 = (G2Projective::generator() * nonzero_scalar(rng)).into_affine();
    let alpha = nonzero_scalar(rng);
    let beta = nonzero_scalar(rng);
    let pk = PublicKey { g1, g2, h: (g1 * beta).into_affine(), y: Bls12_381::pairing(g1, g2) * alpha };
    let mk = MasterSecret { g1, g2, beta, g2_alpha: (g2 * alpha).into_affine() };
    (pk, mk)
}

pub fn keygen<'a>(mk: &MasterSecret, attrs: impl IntoIterator<Item = &'a str>, rng: &mut dyn RngCore) -> UserKey {
    let r = nonzero_scalar(rng);
    let g2_r = mk.g2 * r;
    let beta_inv = mk.beta.inverse().expect("beta is nonzero");
    let d = ((G2Projective::from(mk.g2_alpha) + g2_r) * beta_inv).into_affine();
    let components = attrs
        .into_iter()
        .map(|a| {
            let rj = nonzero_scalar(rng);
            KeyComponent {
                attribute: a.to_owned(),
                d: (g2_r + hash_attribute(a) * rj).into_affine(),
                d_prime: (mk.g1 * rj).into_affine(),
            }
        })
        .collect();
    UserKey { d, components }
}

/// Random polynomial of degree `k - 1` with `q(0) = secret`, evaluated at
/// `1..=n`.
fn share(secret: Fr, k: u32, n: usize, rng: &mut dyn RngCore) -> Vec<Fr> {
    let mut coeffs = vec![secret];
    coeffs.extend((1..k).map(|_| Fr::rand(rng)));
    (1..=n as u64)
        .map(|x| {
            let x = Fr::from(x);
            coeffs.iter().rev().fold(Fr::zero(), |acc, c| acc * x + c)
        })
        .collect()
}

fn encrypt_node(pk: &PublicKey, node: &AccessTree, secret: Fr, rng: &mut dyn RngCore, out: &mut Vec<LeafCiphertext>) {
    match node {
        AccessTree::Leaf(attr) => out.push(LeafCiphertext {
            c: (pk.g1 * secret).into_affine(),
            c_prime: (hash_attribute(attr) * secret).into_affine(),
        }),
        AccessTree::Gate { k, children } => {
            for (child, s) in children.iter().zip(share(secret, *k, children.len(), rng)) {
                encrypt_node(pk, child, s, rng, out);
            }
        }
    }
}

/// Encrypts a GT element under `access`.
pub fn encrypt(pk: &PublicKey, access: &AccessTree, message: Gt, rng: &mut dyn RngCore) -> Ciphertext {
    let s = nonzero_scalar(rng);
    let mut leaves = Vec::with_capacity(access.leaves().len());
    encrypt_node(pk, access, s, rng, &mut leaves);
    Ciphertext { c_tilde: message + pk.y * s, c: (pk.h * s).into_affine(), leaves }
}

fn leaf_count(node: &AccessTree) -> usize {
    match node {
        AccessTree::Leaf(_) => 1,
        AccessTree::Gate { children, .. } => children.iter().map(leaf_count).sum(),
    }
}

/// Lagrange coefficient at zero for index `i` over the index set `set`.
fn lagrange_at_zero(i: u64, set: &[u64]) -> Fr {
    let xi = Fr::from(i);
    let mut num = Fr::from(1u64);
    let mut den = Fr::from(1u64);
    for &j in set.iter().filter(|&&j| j != i) {
        let xj = Fr::from(j);
        num *= -xj;
        den *= xi - xj;
    }
    num * den.inverse().expect("distinct interpolation points")
}

/// Returns `e(g1, g2)^(r · q_node(0))`, touching only the children needed to
/// reach each threshold. `first_leaf` is the index of this node's first leaf
/// in `ct.leaves`.
fn decrypt_node(node: &AccessTree, ct: &Ciphertext, key: &UserKey, first_leaf: usize) -> Option<Gt> {
    match node {
        AccessTree::Leaf(attr) => {
            let comp = key.component(attr)?;
            let leaf = ct.leaves.get(first_leaf)?;
            let neg_d_prime = -G1Projective::from(comp.d_prime);
            Some(Bls12_381::multi_pairing(
                [G1Projective::from(leaf.c), neg_d_prime],
                [G2Projective::from(comp.d), G2Projective::from(leaf.c_prime)],
            ))
        }
        AccessTree::Gate { k, children } => {
            let mut shares: Vec<(u64, Gt)> = Vec::with_capacity(*k as usize);
            let mut offset = first_leaf;
            for (i, child) in children.iter().enumerate() {
                if shares.len() == *k as usize {
                    break;
                }
                if let Some(f) = decrypt_node(child, ct, key, offset) {
                    shares.push((i as u64 + 1, f));
                }
                offset += leaf_count(child);
            }
            if shares.len() < *k as usize {
                return None;
            }
            let set: Vec<u64> = shares.iter().map(|(i, _)| *i).collect();
            Some(shares.iter().fold(Gt::zero(), |acc, (i, f)| acc + *f * lagrange_at_zero(*i, &set)))
        }
    }
}

/// Recovers the GT message when the key's attributes satisfy `access`.
pub fn decrypt(access: &AccessTree, ct: &Ciphertext, key: &UserKey) -> Option<Gt> {
    if ct.leaves.len() != leaf_count(access) {
        return None;
    }
    let a = decrypt_node(access, ct, key, 0)?;
    let blinded = Bls12_381::pairing(ct.c, key.d);
    Some(ct.c_tilde - (blinded - a))
}

fn kdf(domain: &[u8], message: &Gt) -> [u8; 32] {
    let mut bytes = Vec::with_capacity(GT_LEN);
    put_elem(&mut bytes, message);
    let mut h = Sha256::new();
    h.update(domain);
    h.update(&bytes);
    h.finalize().into()
}

pub fn derive_key(message: &Gt) -> [u8; 32] {
    kdf(KDF_DOMAIN, message)
}

fn random_gt(pk: &PublicKey, rng: &mut dyn RngCore) -> Gt {
    Bls12_381::pairing(pk.g1, pk.g2) * nonzero_scalar(rng)
}

impl KemBackend for Bsw07 {
    fn setup(&self, rng: &mut dyn RngCore) -> (Vec<u8>, Vec<u8>) {
        let (pk, mk) = setup(rng);
        (pk.to_bytes(), mk.to_bytes())
    }

    fn check_params(&self, pp: &[u8]) -> Result<(), DecodeError> {
        PublicKey::from_bytes(pp).map(|_| ())
    }

    fn keygen(&self, mk: &[u8], attrs: &AttributeSet, rng: &mut dyn RngCore) -> Result<Vec<u8>, DecodeError> {
        let mk = MasterSecret::from_bytes(mk)?;
        Ok(keygen(&mk, attrs.iter(), rng).to_bytes())
    }

    fn encapsulate(&self, pp: &[u8], access: &AccessTree, rng: &mut dyn RngCore) -> Result<([u8; 32], Vec<u8>), DecodeError> {
        let pk = PublicKey::from_bytes(pp)?;
        let m = random_gt(&pk, rng);
        // capsule = ciphertext || key confirmation, so wrong recoveries are detected
        let mut capsule = encrypt(&pk, access, m, rng).to_bytes();
        capsule.extend_from_slice(&kdf(CONFIRM_DOMAIN, &m));
        Ok((derive_key(&m), capsule))
    }

    fn decapsulate(
        &self,
        _pp: &[u8],
        access: &AccessTree,
        ct: &[u8],
        key: &[u8],
        _attrs: &AttributeSet,
    ) -> Result<Option<[u8; 32]>, DecodeError> {
        let split = ct.len().checked_sub(32).ok_or(DecodeError::Truncated)?;
        let (body, confirm) = ct.split_at(split);
        let ct = Ciphertext::from_bytes(body)?;
        let key = UserKey::from_bytes(key)?;
        Ok(decrypt(access, &ct, &key).filter(|m| kdf(CONFIRM_DOMAIN, m) == confirm).map(|m| derive_key(&m)))
    }
}
