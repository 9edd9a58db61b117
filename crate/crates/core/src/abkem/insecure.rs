//! Pairing-free stand-in with the same predicate semantics as the real scheme.
//!
//! The public parameters contain the master seed, so anyone holding them can
//! unwrap every capsule. Keys carry a tag over their full attribute list;
//! spliced or edited keys fail the tag check.

use rand::RngCore;

use crate::encoding::{hash_segments, DecodeError, Reader};
use crate::policy::{AccessTree, AttributeSet};

use super::KemBackend;

pub(crate) struct InsecureTest;

fn key_tag(seed: &[u8; 32], attrs: &AttributeSet) -> [u8; 32] {
    let mut segs: Vec<&[u8]> = vec![b"petra-insecure-key", seed];
    segs.extend(attrs.iter().map(str::as_bytes));
    hash_segments(segs).0
}

fn mask(seed: &[u8; 32], access: &AccessTree, nonce: &[u8; 32]) -> [u8; 32] {
    hash_segments([b"petra-insecure-mask".as_slice(), seed, access.policy_id().as_bytes(), nonce]).0
}

fn confirm(seed: &[u8; 32], nonce: &[u8; 32], key: &[u8; 32]) -> [u8; 32] {
    hash_segments([b"petra-insecure-confirm".as_slice(), seed, nonce, key]).0
}

fn xor(a: &[u8; 32], b: &[u8; 32]) -> [u8; 32] {
    std::array::from_fn(|i| a[i] ^ b[i])
}

fn seed_of(bytes: &[u8]) -> Result<[u8; 32], DecodeError> {
    let mut r = Reader::new(bytes);
    let seed = r.array::<32>()?;
    r.finish()?;
    Ok(seed)
}

impl KemBackend for InsecureTest {
    fn setup(&self, rng: &mut dyn RngCore) -> (Vec<u8>, Vec<u8>) {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        (seed.to_vec(), seed.to_vec())
    }

    fn check_params(&self, pp: &[u8]) -> Result<(), DecodeError> {
        seed_of(pp).map(|_| ())
    }

    fn keygen(&self, mk: &[u8], attrs: &AttributeSet, _rng: &mut dyn RngCore) -> Result<Vec<u8>, DecodeError> {
        Ok(key_tag(&seed_of(mk)?, attrs).to_vec())
    }

    fn encapsulate(&self, pp: &[u8], access: &AccessTree, rng: &mut dyn RngCore) -> Result<([u8; 32], Vec<u8>), DecodeError> {
        let seed = seed_of(pp)?;
        let mut key = [0u8; 32];
        let mut nonce = [0u8; 32];
        rng.fill_bytes(&mut key);
        rng.fill_bytes(&mut nonce);
        let mut ct = nonce.to_vec();
        ct.extend_from_slice(&xor(&key, &mask(&seed, access, &nonce)));
        ct.extend_from_slice(&confirm(&seed, &nonce, &key));
        Ok((key, ct))
    }

    fn decapsulate(
        &self,
        pp: &[u8],
        access: &AccessTree,
        ct: &[u8],
        key: &[u8],
        attrs: &AttributeSet,
    ) -> Result<Option<[u8; 32]>, DecodeError> {
        let seed = seed_of(pp)?;
        if key != key_tag(&seed, attrs) || !access.satisfied_by(attrs, None) {
            return Ok(None);
        }
        let mut r = Reader::new(ct);
        let nonce = r.array::<32>()?;
        let body = r.array::<32>()?;
        let check = r.array::<32>()?;
        r.finish()?;
        let key = xor(&body, &mask(&seed, access, &nonce));
        Ok((confirm(&seed, &nonce, &key) == check).then_some(key))
    }
}
