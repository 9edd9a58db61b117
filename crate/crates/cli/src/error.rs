use std::path::PathBuf;

use petra_core::pipeline::PipelineError;
use petra_core::policy::PolicyError;
use petra_core::sbom::SbomError;
use petra_kms::KmsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("policy file not found: {}", .0.display())]
    PolicyNotFound(PathBuf),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sbom(#[from] SbomError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("signature rejected: {0}")]
    SignatureRejected(String),
    #[error("nothing stored for {0}")]
    NotFound(String),
    #[error("split view: {0}")]
    SplitView(String),
    #[error("key service: {0}")]
    Kms(String),
    #[error(transparent)]
    KeyService(#[from] KmsError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "IO_ERROR",
            CliError::PolicyNotFound(_) => "POLICY_NOT_FOUND",
            CliError::Pipeline(e) => e.code(),
            CliError::Policy(_) => "POLICY_SYNTAX",
            CliError::Sbom(_) => "MALFORMED_DOCUMENT",
            CliError::Config(_) => "CONFIG_ERROR",
            CliError::SignatureRejected(_) => "SIGNATURE_REJECTED",
            CliError::NotFound(_) => "NOT_FOUND",
            CliError::SplitView(_) => "SPLIT_VIEW",
            CliError::Kms(_) => "KEY_SERVICE_ERROR",
            CliError::KeyService(e) => e.code(),
            CliError::Usage(_) => "USAGE",
        }
    }

    /// Process exit status; part of the command-line contract.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "FAIL_UNTRUSTED_SBOM" | "SIGNATURE_REJECTED" => EXIT_UNTRUSTED,
            "FAIL_GENERATOR_PRODUCER_LIED" | "SAMENESS_FAILURE" => EXIT_LIED,
            "SPLIT_VIEW" => EXIT_SPLIT_VIEW,
            _ => EXIT_FAILURE,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_UNTRUSTED: i32 = 2;
pub const EXIT_LIED: i32 = 3;
pub const EXIT_SPLIT_VIEW: i32 = 4;
