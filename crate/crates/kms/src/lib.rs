//! Key service: CP-ABE setup, token-authenticated key issuance with monthly
//! expiry windows, rotation, revocation and single-level delegation.

use std::path::PathBuf;

use petra_core::abkem::AbkemError;
use thiserror::Error;

pub mod http;
pub mod ledger;
pub mod service;
pub mod token;

pub use service::{KeyGrant, KeyService, KmsConfig, PublicInfo};
pub use token::{derive_attributes, IdentityToken, SignedToken};

/// Environment variable naming the state directory.
pub const STATE_ENV: &str = "PETRA_KMS_STATE";

#[derive(Debug, Error)]
pub enum KmsError {
    #[error("state already exists at {0}")]
    StateExists(PathBuf),
    #[error("no key service state at {0}; run setup first")]
    NotInitialized(PathBuf),
    #[error("unknown scheme {0}")]
    UnknownScheme(String),
    #[error("token does not authenticate")]
    AuthenticationFailure,
    #[error("token or key is outside its validity window")]
    ExpiredToken,
    #[error("subject {0:?} is not of the form local@domain")]
    MalformedSubject(String),
    #[error("claim {0} does not form a valid attribute")]
    BadClaim(String),
    #[error("{0} has been revoked")]
    Revoked(String),
    #[error("no grant on record for {0}")]
    NoGrant(String),
    #[error("delegation refused: {0}")]
    BadDelegation(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Crypto(#[from] AbkemError),
    #[error("corrupt state: {0}")]
    Corrupt(String),
}

impl KmsError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            KmsError::StateExists(_) => "STATE_EXISTS",
            KmsError::NotInitialized(_) => "NOT_INITIALIZED",
            KmsError::UnknownScheme(_) => "UNKNOWN_SCHEME",
            KmsError::AuthenticationFailure => "AUTHENTICATION_FAILURE",
            KmsError::ExpiredToken => "EXPIRED_TOKEN",
            KmsError::MalformedSubject(_) => "MALFORMED_SUBJECT",
            KmsError::BadClaim(_) => "BAD_CLAIM",
            KmsError::Revoked(_) => "REVOKED",
            KmsError::NoGrant(_) => "NO_GRANT",
            KmsError::BadDelegation(_) => "BAD_DELEGATION",
            KmsError::BadRequest(_) => "BAD_REQUEST",
            KmsError::Io(_) => "IO_ERROR",
            KmsError::Crypto(_) => "CRYPTO_ERROR",
            KmsError::Corrupt(_) => "CORRUPT_STATE",
        }
    }
}
