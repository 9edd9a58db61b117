//! The key service proper: persisted state plus issuance, rotation,
//! revocation and delegation.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use ed25519_dalek::{SigningKey, VerifyingKey};
use petra_core::abkem::{
    abe_keygen, abe_setup, decapsulate, encapsulate, AttributeSecretKey, MasterKey, PublicParams, Scheme,
};
use petra_core::month::Month;
use petra_core::pipeline::SigningKeyPair;
use petra_core::policy::{AccessTree, AttributeSet};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::ledger::{IssuedVia, Ledger, LedgerEntry, LedgerEvent};
use crate::token::{derive_attributes, SignedToken};
use crate::KmsError;

pub const CONFIG_FILE: &str = "config.json";
pub const PARAMS_FILE: &str = "params.pabe";
pub const MASTER_FILE: &str = "master.pabe";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const GRANTS_DIR: &str = "grants";

/// Names of the Ed25519 keys created at setup; each has a `.key` (secret, hex)
/// and a `.pub` (public, hex) file.
pub const GENERATOR: &str = "generator";
pub const PRODUCER: &str = "producer";
/// Test identity authority that signs tokens.
pub const AUTHORITY: &str = "authority";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KmsConfig {
    pub scheme: String,
    /// Token claims copied into attributes as `<claim>:<value>`.
    #[serde(default)]
    pub mapped_claims: Vec<String>,
}

impl Default for KmsConfig {
    fn default() -> Self {
        KmsConfig { scheme: Scheme::Bsw07.name().into(), mapped_claims: vec!["role".into(), "org".into(), "cert".into()] }
    }
}

#[derive(Clone, Debug)]
pub struct KeyGrant {
    pub subject: String,
    pub key: AttributeSecretKey,
    pub issued_at: DateTime<Utc>,
    pub expiry_window: Month,
}

/// What `GET /params` serves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicInfo {
    pub scheme: String,
    #[serde(with = "petra_core::encoding::b64")]
    pub params: Vec<u8>,
    pub generator_public: String,
    pub producer_public: String,
    pub authority_public: String,
}

pub struct KeyService {
    dir: PathBuf,
    config: KmsConfig,
    pp: PublicParams,
    master: Mutex<MasterKey>,
    authority: VerifyingKey,
    ledger: Mutex<Ledger>,
    rng: Mutex<StdRng>,
}

fn write_private(path: &Path, bytes: &[u8]) -> Result<(), KmsError> {
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    use std::io::Write;
    opts.open(path)?.write_all(bytes)?;
    Ok(())
}

pub fn read_hex_key(path: &Path) -> Result<[u8; 32], KmsError> {
    let text = fs::read_to_string(path)?;
    hex::decode(text.trim())
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| KmsError::Corrupt(format!("{} is not a 32-byte hex key", path.display())))
}

pub fn load_signing_key(path: &Path) -> Result<SigningKeyPair, KmsError> {
    Ok(SigningKeyPair::from_secret_bytes(&read_hex_key(path)?))
}

pub fn load_verifying_key(path: &Path) -> Result<VerifyingKey, KmsError> {
    VerifyingKey::from_bytes(&read_hex_key(path)?)
        .map_err(|_| KmsError::Corrupt(format!("{} is not an Ed25519 public key", path.display())))
}

fn subject_of(attrs: &AttributeSet) -> Option<String> {
    let user = attrs.iter().find_map(|a| a.strip_prefix("user:"))?;
    let ns = attrs.iter().find_map(|a| a.strip_prefix("namespace:"))?;
    Some(format!("{user}@{ns}"))
}

fn grant_file(subject: &str) -> String {
    format!("{}.key", hex::encode(subject.as_bytes()))
}

impl KeyService {
    /// Creates the state directory contents. Refuses to touch an existing
    /// state.
    pub fn setup(dir: &Path, config: KmsConfig) -> Result<KeyService, KmsError> {
        if dir.join(CONFIG_FILE).exists() || dir.join(MASTER_FILE).exists() {
            return Err(KmsError::StateExists(dir.to_path_buf()));
        }
        let scheme = Scheme::parse(&config.scheme).ok_or_else(|| KmsError::UnknownScheme(config.scheme.clone()))?;
        fs::create_dir_all(dir.join(GRANTS_DIR))?;
        let mut rng = StdRng::from_entropy();
        let (pp, mk) = abe_setup(scheme, 128, &mut rng)?;
        write_private(&dir.join(MASTER_FILE), &mk.to_storage_bytes())?;
        fs::write(dir.join(PARAMS_FILE), pp.to_bytes())?;
        for name in [GENERATOR, PRODUCER, AUTHORITY] {
            let k = SigningKey::generate(&mut rng);
            write_private(&dir.join(format!("{name}.key")), format!("{}\n", hex::encode(k.to_bytes())).as_bytes())?;
            fs::write(dir.join(format!("{name}.pub")), format!("{}\n", hex::encode(k.verifying_key().to_bytes())))?;
        }
        fs::write(dir.join(CONFIG_FILE), serde_json::to_vec_pretty(&config).expect("config serializes"))?;
        KeyService::open(dir)
    }

    pub fn open(dir: &Path) -> Result<KeyService, KmsError> {
        let config_bytes = fs::read(dir.join(CONFIG_FILE)).map_err(|_| KmsError::NotInitialized(dir.to_path_buf()))?;
        let config: KmsConfig =
            serde_json::from_slice(&config_bytes).map_err(|e| KmsError::Corrupt(format!("config: {e}")))?;
        let pp = PublicParams::from_bytes(&fs::read(dir.join(PARAMS_FILE))?)?;
        let master = MasterKey::from_storage_bytes(&fs::read(dir.join(MASTER_FILE))?)?;
        let authority = load_verifying_key(&dir.join(format!("{AUTHORITY}.pub")))?;
        fs::create_dir_all(dir.join(GRANTS_DIR))?;
        Ok(KeyService {
            dir: dir.to_path_buf(),
            config,
            pp,
            master: Mutex::new(master),
            authority,
            ledger: Mutex::new(Ledger::new(dir.join(LEDGER_FILE))),
            rng: Mutex::new(StdRng::from_entropy()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn params(&self) -> &PublicParams {
        &self.pp
    }

    pub fn public_info(&self) -> Result<PublicInfo, KmsError> {
        let hex_of = |name: &str| -> Result<String, KmsError> {
            Ok(hex::encode(read_hex_key(&self.dir.join(format!("{name}.pub")))?))
        };
        Ok(PublicInfo {
            scheme: self.pp.scheme().name().into(),
            params: self.pp.to_bytes(),
            generator_public: hex_of(GENERATOR)?,
            producer_public: hex_of(PRODUCER)?,
            authority_public: hex_of(AUTHORITY)?,
        })
    }

    fn keygen(&self, attrs: &AttributeSet) -> Result<AttributeSecretKey, KmsError> {
        let mk = self.master.lock().expect("master key lock");
        let mut rng = self.rng.lock().expect("rng lock");
        Ok(abe_keygen(&mk, attrs, &mut *rng)?)
    }

    fn record(
        &self,
        ledger: &Ledger,
        subject: &str,
        key: AttributeSecretKey,
        now: DateTime<Utc>,
        via: IssuedVia,
    ) -> Result<KeyGrant, KmsError> {
        let window = key.attributes().expiry().expect("every grant carries one expiry attribute");
        ledger.append(&LedgerEntry {
            at: now,
            subject: subject.to_owned(),
            event: LedgerEvent::Issued {
                attributes: key.attributes().iter().map(str::to_owned).collect(),
                expiry: window,
                key_fingerprint: key.fingerprint(),
                via,
            },
        })?;
        if via != IssuedVia::Delegation {
            fs::write(self.dir.join(GRANTS_DIR).join(grant_file(subject)), key.to_bytes())?;
        }
        Ok(KeyGrant { subject: subject.to_owned(), key, issued_at: now, expiry_window: window })
    }

    /// Authenticates the token and issues a key for its derived attributes.
    pub fn issue(&self, token: &SignedToken, now: DateTime<Utc>) -> Result<KeyGrant, KmsError> {
        let t = token.verify(&self.authority)?;
        let attrs = derive_attributes(t, now, &self.config.mapped_claims)?;
        let ledger = self.ledger.lock().expect("ledger lock");
        if ledger.is_revoked(&t.subject)? {
            return Err(KmsError::Revoked(t.subject.clone()));
        }
        let key = self.keygen(&attrs)?;
        self.record(&ledger, &t.subject, key, now, IssuedVia::Token)
    }

    /// The most recent grant (token or rotation) for the token's subject.
    pub fn current(&self, token: &SignedToken, now: DateTime<Utc>) -> Result<KeyGrant, KmsError> {
        let t = token.verify(&self.authority)?;
        derive_attributes(t, now, &self.config.mapped_claims)?;
        let ledger = self.ledger.lock().expect("ledger lock");
        if ledger.is_revoked(&t.subject)? {
            return Err(KmsError::Revoked(t.subject.clone()));
        }
        let bytes = fs::read(self.dir.join(GRANTS_DIR).join(grant_file(&t.subject)))
            .map_err(|_| KmsError::NoGrant(t.subject.clone()))?;
        let key = AttributeSecretKey::from_bytes(&bytes)?;
        let window = key.attributes().expiry().ok_or_else(|| KmsError::Corrupt("grant without expiry".into()))?;
        Ok(KeyGrant { subject: t.subject.clone(), key, issued_at: now, expiry_window: window })
    }

    pub fn revoke(&self, subject: &str, now: DateTime<Utc>) -> Result<(), KmsError> {
        let ledger = self.ledger.lock().expect("ledger lock");
        ledger.append(&LedgerEntry { at: now, subject: subject.to_owned(), event: LedgerEvent::Revoked })?;
        let _ = fs::remove_file(self.dir.join(GRANTS_DIR).join(grant_file(subject)));
        Ok(())
    }

    /// Reissues every non-revoked identity's key for the window of `now`.
    /// Identities already holding a key for that window are skipped.
    pub fn rotate(&self, now: DateTime<Utc>) -> Result<usize, KmsError> {
        let window = Month::of(now);
        let ledger = self.ledger.lock().expect("ledger lock");
        let mut count = 0;
        for (subject, attributes, expiry) in ledger.active()? {
            if expiry >= window {
                continue;
            }
            let attrs = AttributeSet::from_iter(attributes)
                .map_err(|e| KmsError::Corrupt(format!("ledger attributes: {e}")))?
                .with_expiry(window);
            let key = self.keygen(&attrs)?;
            self.record(&ledger, &subject, key, now, IssuedVia::Rotation)?;
            count += 1;
        }
        Ok(count)
    }

    /// Issues a key for a subset of a presented key's attributes. The parent
    /// key must prove possession by opening a capsule under all of its
    /// attributes; the child inherits the parent's expiry window.
    pub fn delegate(
        &self,
        parent: &AttributeSecretKey,
        subset: &AttributeSet,
        now: DateTime<Utc>,
    ) -> Result<KeyGrant, KmsError> {
        let parent_attrs = parent.attributes();
        let window = parent_attrs.expiry().ok_or_else(|| KmsError::BadDelegation("parent key has no expiry".into()))?;
        if window < Month::of(now) {
            return Err(KmsError::ExpiredToken);
        }
        let subject = subject_of(parent_attrs)
            .ok_or_else(|| KmsError::BadDelegation("parent key has no user/namespace attributes".into()))?;
        let wanted: Vec<&str> = subset.iter().filter(|a| Month::from_attribute(a).is_none()).collect();
        if wanted.is_empty() {
            return Err(KmsError::BadDelegation("empty subset".into()));
        }
        if let Some(extra) = wanted.iter().find(|a| !parent_attrs.contains(a)) {
            return Err(KmsError::BadDelegation(format!("{extra} is not held by the parent key")));
        }

        let challenge = AccessTree::and(
            parent_attrs.iter().map(AccessTree::leaf).collect::<Result<Vec<_>, _>>().expect("valid attributes"),
        )
        .expect("non-empty conjunction");
        let (expected, slot) = {
            let mut rng = self.rng.lock().expect("rng lock");
            encapsulate(&self.pp, &challenge, &mut *rng)?
        };
        match decapsulate(&self.pp, &slot, parent) {
            Ok(k) if k == expected => {}
            _ => return Err(KmsError::AuthenticationFailure),
        }

        let ledger = self.ledger.lock().expect("ledger lock");
        if ledger.is_revoked(&subject)? {
            return Err(KmsError::Revoked(subject));
        }
        let attrs = AttributeSet::from_iter(wanted.iter().copied())
            .expect("attributes came from a valid set")
            .with_expiry(window);
        let key = self.keygen(&attrs)?;
        self.record(&ledger, &subject, key, now, IssuedVia::Delegation)
    }

    pub fn ledger_entries(&self) -> Result<Vec<LedgerEntry>, KmsError> {
        self.ledger.lock().expect("ledger lock").entries()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::IdentityToken;
    use chrono::TimeZone;
    use petra_core::abkem::encapsulate;
    use std::collections::BTreeMap;

    pub(crate) fn test_config() -> KmsConfig {
        KmsConfig { scheme: Scheme::InsecureTest.name().into(), ..KmsConfig::default() }
    }

    fn at(y: i32, m: u32, d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, 12, 0, 0).unwrap()
    }

    fn token(svc: &KeyService, subject: &str, claims: &[(&str, &str)]) -> SignedToken {
        let authority = SigningKey::from_bytes(&read_hex_key(&svc.dir().join("authority.key")).unwrap());
        IdentityToken {
            subject: subject.into(),
            claims: claims.iter().map(|(k, v)| ((*k).into(), (*v).into())).collect::<BTreeMap<_, _>>(),
            not_before: at(2025, 1, 1),
            not_after: at(2026, 1, 1),
        }
        .sign(&authority)
    }

    #[test]
    fn setup_refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let svc = KeyService::setup(dir.path(), test_config()).unwrap();
        for f in [CONFIG_FILE, PARAMS_FILE, MASTER_FILE, "generator.key", "producer.pub", "authority.key"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert!(matches!(KeyService::setup(dir.path(), test_config()), Err(KmsError::StateExists(_))));
        assert_eq!(svc.public_info().unwrap().params, fs::read(dir.path().join(PARAMS_FILE)).unwrap());
        assert!(matches!(KeyService::open(&dir.path().join("nope")), Err(KmsError::NotInitialized(_))));
    }

    #[test]
    fn issue_twice_gives_equivalent_keys_and_two_entries() {
        let dir = tempfile::tempdir().unwrap();
        let svc = KeyService::setup(dir.path(), test_config()).unwrap();
        let t = token(&svc, "foo@bar.com", &[("role", "auditor")]);
        let a = svc.issue(&t, at(2025, 6, 15)).unwrap();
        let b = svc.issue(&t, at(2025, 6, 15)).unwrap();
        assert_eq!(a.expiry_window.to_string(), "2025-06");
        assert!(a.key.attributes().contains("role:auditor"));
        let mut rng = StdRng::seed_from_u64(1);
        let (k, slot) = encapsulate(svc.params(), &AccessTree::parse("namespace:bar.com").unwrap(), &mut rng).unwrap();
        assert!(decapsulate(svc.params(), &slot, &a.key).unwrap() == k);
        assert!(decapsulate(svc.params(), &slot, &b.key).unwrap() == k);
        assert_eq!(svc.ledger_entries().unwrap().len(), 2);

        let mut bad = t.clone();
        bad.signature[0] ^= 1;
        assert!(matches!(svc.issue(&bad, at(2025, 6, 15)), Err(KmsError::AuthenticationFailure)));
    }

    #[test]
    fn rotation_skips_revoked_and_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let svc = KeyService::setup(dir.path(), test_config()).unwrap();
        for s in ["a@x.org", "b@x.org", "c@x.org", "d@x.org"] {
            svc.issue(&token(&svc, s, &[]), at(2025, 6, 15)).unwrap();
        }
        svc.revoke("d@x.org", at(2025, 6, 20)).unwrap();
        assert_eq!(svc.rotate(at(2025, 7, 1)).unwrap(), 3);
        assert_eq!(svc.rotate(at(2025, 7, 2)).unwrap(), 0);
        let cur = svc.current(&token(&svc, "a@x.org", &[]), at(2025, 7, 3)).unwrap();
        assert_eq!(cur.expiry_window.to_string(), "2025-07");
        assert!(matches!(svc.current(&token(&svc, "d@x.org", &[]), at(2025, 7, 3)), Err(KmsError::Revoked(_))));
        assert!(matches!(svc.issue(&token(&svc, "d@x.org", &[]), at(2025, 7, 3)), Err(KmsError::Revoked(_))));
    }

    #[test]
    fn delegation_is_a_checked_subset() {
        let dir = tempfile::tempdir().unwrap();
        let svc = KeyService::setup(dir.path(), test_config()).unwrap();
        let parent = svc.issue(&token(&svc, "foo@bar.com", &[("role", "auditor")]), at(2025, 6, 15)).unwrap().key;
        let subset = AttributeSet::from_iter(["role:auditor"]).unwrap();
        let child = svc.delegate(&parent, &subset, at(2025, 6, 16)).unwrap();
        let got: Vec<&str> = child.key.attributes().iter().collect();
        assert_eq!(got, ["expiry:2025-06", "role:auditor"]);

        let wider = AttributeSet::from_iter(["role:admin"]).unwrap();
        assert!(matches!(svc.delegate(&parent, &wider, at(2025, 6, 16)), Err(KmsError::BadDelegation(_))));

        let forged = AttributeSecretKey::from_parts(
            parent.scheme(),
            parent.attributes().union(&AttributeSet::from_iter(["role:admin"]).unwrap()),
            parent.material().to_vec(),
        );
        let admin = AttributeSet::from_iter(["role:admin"]).unwrap();
        assert!(matches!(svc.delegate(&forged, &admin, at(2025, 6, 16)), Err(KmsError::AuthenticationFailure)));
        assert!(matches!(svc.delegate(&parent, &subset, at(2025, 7, 16)), Err(KmsError::ExpiredToken)));
    }
}
