//! `petra.toml`: where to find public parameters, trusted keys, the store
//! and the key service. Relative paths resolve against the file's directory.
//!
//! ```toml
//! params = "kms/params.pabe"
//! generator_public = "kms/generator.pub"
//! producer_public = "kms/producer.pub"
//! generator_key = "kms/generator.key"
//! producer_key = "kms/producer.key"
//! store = "store"
//! kms_url = "http://127.0.0.1:8470"
//! ```

use std::path::{Path, PathBuf};

use petra_core::abkem::PublicParams;
use petra_core::pipeline::{parse_verifying_key, SigningKeyPair, TrustedKeys, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_CONFIG: &str = "petra.toml";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub params: Option<PathBuf>,
    pub generator_public: Option<PathBuf>,
    pub producer_public: Option<PathBuf>,
    pub generator_key: Option<PathBuf>,
    pub producer_key: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub kms_url: Option<String>,
}

impl Config {
    /// Loads `path`; a missing default file yields an empty config.
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let (path, explicit) = match path {
            Some(p) => (p.to_path_buf(), true),
            None => (PathBuf::from(DEFAULT_CONFIG), false),
        };
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if !explicit && e.kind() == std::io::ErrorKind::NotFound => return Ok(Config::default()),
            Err(e) => return Err(CliError::io(&path)(e)),
        };
        let mut cfg: Config =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        for p in [
            &mut cfg.params,
            &mut cfg.generator_public,
            &mut cfg.producer_public,
            &mut cfg.generator_key,
            &mut cfg.producer_key,
            &mut cfg.store,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn need<'a>(v: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
        v.as_deref().ok_or_else(|| CliError::Config(format!("{what} is not configured")))
    }

    pub fn public_params(&self) -> Result<PublicParams, CliError> {
        let path = Config::need(&self.params, "params")?;
        let bytes = std::fs::read(path).map_err(CliError::io(path))?;
        PublicParams::from_bytes(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn trusted_keys(&self) -> Result<TrustedKeys, CliError> {
        Ok(TrustedKeys {
            generator: read_public_key(Config::need(&self.generator_public, "generator_public")?)?,
            producer: read_public_key(Config::need(&self.producer_public, "producer_public")?)?,
        })
    }

    pub fn generator_public(&self) -> Result<VerifyingKey, CliError> {
        read_public_key(Config::need(&self.generator_public, "generator_public")?)
    }

    pub fn generator_key(&self) -> Result<SigningKeyPair, CliError> {
        read_signing_key(Config::need(&self.generator_key, "generator_key")?)
    }

    pub fn producer_key(&self) -> Result<Option<SigningKeyPair>, CliError> {
        self.producer_key.as_deref().map(read_signing_key).transpose()
    }

    pub fn store(&self) -> Result<&Path, CliError> {
        Config::need(&self.store, "store")
    }

    pub fn kms_url(&self) -> Result<&str, CliError> {
        self.kms_url.as_deref().ok_or_else(|| CliError::Config("kms_url is not configured".into()))
    }
}

fn read_hex32(path: &Path) -> Result<[u8; 32], CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    hex::decode(text.trim())
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| CliError::Config(format!("{} does not hold a 32-byte hex key", path.display())))
}

pub fn read_public_key(path: &Path) -> Result<VerifyingKey, CliError> {
    parse_verifying_key(&read_hex32(path)?)
        .ok_or_else(|| CliError::Config(format!("{} is not an Ed25519 public key", path.display())))
}

pub fn read_signing_key(path: &Path) -> Result<SigningKeyPair, CliError> {
    Ok(SigningKeyPair::from_secret_bytes(&read_hex32(path)?))
}
