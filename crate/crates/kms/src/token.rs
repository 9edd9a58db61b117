//! Identity tokens: a stand-in for OIDC identity proofs, signed by a test
//! authority whose public key the service trusts.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use petra_core::encoding::{b64, put_lp};
use petra_core::month::Month;
use petra_core::policy::AttributeSet;
use serde::{Deserialize, Serialize};

use crate::KmsError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityToken {
    /// `local@domain`.
    pub subject: String,
    #[serde(default)]
    pub claims: BTreeMap<String, String>,
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedToken {
    #[serde(flatten)]
    pub token: IdentityToken,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

impl IdentityToken {
    fn signing_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_lp(&mut out, b"petra-identity-token-v1");
        put_lp(&mut out, self.subject.as_bytes());
        for (k, v) in &self.claims {
            put_lp(&mut out, k.as_bytes());
            put_lp(&mut out, v.as_bytes());
        }
        put_lp(&mut out, self.not_before.to_rfc3339().as_bytes());
        put_lp(&mut out, self.not_after.to_rfc3339().as_bytes());
        out
    }

    pub fn sign(self, authority: &SigningKey) -> SignedToken {
        let signature = authority.sign(&self.signing_bytes()).to_bytes().to_vec();
        SignedToken { token: self, signature }
    }
}

impl SignedToken {
    pub fn verify(&self, authority: &VerifyingKey) -> Result<&IdentityToken, KmsError> {
        let sig = ed25519_dalek::Signature::from_slice(&self.signature).map_err(|_| KmsError::AuthenticationFailure)?;
        authority
            .verify(&self.token.signing_bytes(), &sig)
            .map_err(|_| KmsError::AuthenticationFailure)?;
        Ok(&self.token)
    }
}

/// Attributes for a token: `user:<local>`, `namespace:<domain>`, each mapped
/// claim as `<claim>:<value>`, and `expiry:<now's month>`.
pub fn derive_attributes(
    token: &IdentityToken,
    now: DateTime<Utc>,
    mapped_claims: &[String],
) -> Result<AttributeSet, KmsError> {
    if now < token.not_before || now > token.not_after {
        return Err(KmsError::ExpiredToken);
    }
    let malformed = || KmsError::MalformedSubject(token.subject.clone());
    let (local, domain) = token.subject.split_once('@').ok_or_else(malformed)?;
    if local.is_empty() || domain.is_empty() || domain.contains('@') {
        return Err(malformed());
    }
    let mut attrs = AttributeSet::new();
    attrs.insert(format!("user:{local}")).map_err(|_| malformed())?;
    attrs.insert(format!("namespace:{domain}")).map_err(|_| malformed())?;
    for claim in mapped_claims {
        if let Some(v) = token.claims.get(claim) {
            attrs
                .insert(format!("{claim}:{v}"))
                .map_err(|_| KmsError::BadClaim(claim.clone()))?;
        }
    }
    attrs.insert(Month::of(now).attribute()).expect("expiry attributes are well formed");
    Ok(attrs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn token(subject: &str) -> IdentityToken {
        IdentityToken {
            subject: subject.into(),
            claims: BTreeMap::from([("role".into(), "auditor".into()), ("team".into(), "red".into())]),
            not_before: Utc.with_ymd_and_hms(2025, 6, 1, 0, 0, 0).unwrap(),
            not_after: Utc.with_ymd_and_hms(2025, 7, 1, 0, 0, 0).unwrap(),
        }
    }

    fn june() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 6, 15, 12, 0, 0).unwrap()
    }

    #[test]
    fn email_decomposes_into_user_and_namespace() {
        let attrs = derive_attributes(&token("foo@bar.com"), june(), &[]).unwrap();
        let got: Vec<&str> = attrs.iter().collect();
        assert_eq!(got, ["expiry:2025-06", "namespace:bar.com", "user:foo"]);
    }

    #[test]
    fn mapped_claims_pass_through() {
        let attrs = derive_attributes(&token("foo@bar.com"), june(), &["role".into()]).unwrap();
        assert!(attrs.contains("role:auditor"));
        assert!(!attrs.iter().any(|a| a.starts_with("team:")));
    }

    #[test]
    fn rejects_bad_subjects_and_windows() {
        assert!(matches!(derive_attributes(&token("foo"), june(), &[]), Err(KmsError::MalformedSubject(_))));
        assert!(matches!(derive_attributes(&token("@bar.com"), june(), &[]), Err(KmsError::MalformedSubject(_))));
        let late = Utc.with_ymd_and_hms(2025, 8, 1, 0, 0, 0).unwrap();
        assert!(matches!(derive_attributes(&token("foo@bar.com"), late, &[]), Err(KmsError::ExpiredToken)));
    }

    #[test]
    fn signature_is_checked() {
        let mut rng = StdRng::seed_from_u64(3);
        let authority = SigningKey::generate(&mut rng);
        let other = SigningKey::generate(&mut rng);
        let signed = token("foo@bar.com").sign(&authority);
        assert!(signed.verify(&authority.verifying_key()).is_ok());
        assert!(matches!(signed.verify(&other.verifying_key()), Err(KmsError::AuthenticationFailure)));
        let mut forged = signed.clone();
        forged.token.claims.insert("role".into(), "admin".into());
        assert!(forged.verify(&authority.verifying_key()).is_err());
        let json = serde_json::to_string(&signed).unwrap();
        assert_eq!(serde_json::from_str::<SignedToken>(&json).unwrap(), signed);
    }
}
