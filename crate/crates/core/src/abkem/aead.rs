//! Node payload encryption: AES-256-GCM over `lp(salt) || lp(payload)`, with
//! the policy id as associated data.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use rand::{CryptoRng, RngCore};

use crate::encoding::{lp_concat, Hash256, Reader};

use super::{AbkemError, SymmetricKey};

pub const NONCE_LEN: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeCiphertext {
    pub policy_id: Hash256,
    pub nonce: [u8; NONCE_LEN],
    /// Ciphertext with the 16-byte tag appended.
    pub ciphertext: Vec<u8>,
}

impl NodeCiphertext {
    /// `nonce || ciphertext+tag`; the policy id is stored by the caller.
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_LEN + self.ciphertext.len());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_body(policy_id: Hash256, body: &[u8]) -> Option<Self> {
        if body.len() < NONCE_LEN + 16 {
            return None;
        }
        let (nonce, ciphertext) = body.split_at(NONCE_LEN);
        Some(NodeCiphertext { policy_id, nonce: nonce.try_into().ok()?, ciphertext: ciphertext.to_vec() })
    }
}

pub fn encrypt_node<R: RngCore + CryptoRng>(
    key: &SymmetricKey,
    policy_id: Hash256,
    salt: &[u8; 32],
    payload: &[u8],
    rng: &mut R,
) -> NodeCiphertext {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let plaintext = lp_concat([salt.as_slice(), payload]);
    let ciphertext = Aes256Gcm::new((&key.0).into())
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: &plaintext, aad: policy_id.as_bytes() })
        .expect("AES-GCM encryption of an in-memory buffer");
    NodeCiphertext { policy_id, nonce, ciphertext }
}

/// Returns `(salt, payload)`.
pub fn decrypt_node(key: &SymmetricKey, ct: &NodeCiphertext) -> Result<([u8; 32], Vec<u8>), AbkemError> {
    let plaintext = Aes256Gcm::new((&key.0).into())
        .decrypt(Nonce::from_slice(&ct.nonce), Payload { msg: &ct.ciphertext, aad: ct.policy_id.as_bytes() })
        .map_err(|_| AbkemError::AuthenticationFailure)?;
    let mut r = Reader::new(&plaintext);
    let salt: [u8; 32] = r
        .lp()
        .ok()
        .and_then(|s| s.try_into().ok())
        .ok_or(AbkemError::AuthenticationFailure)?;
    let payload = r.lp().map_err(|_| AbkemError::AuthenticationFailure)?.to_vec();
    r.finish().map_err(|_| AbkemError::AuthenticationFailure)?;
    Ok((salt, payload))
}
