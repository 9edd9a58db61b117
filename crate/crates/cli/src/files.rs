//! Loading inputs: SBOM documents in any supported format, containers,
//! policies and consumer keys.

use std::path::Path;

use petra_core::abkem::AttributeSecretKey;
use petra_core::encoding::{b64_decode, Reader};
use petra_core::merkle::{Body, RedactedSbom};
use petra_core::pipeline::read_container;
use petra_core::policy::{parse_policy, RedactionPolicy};
use petra_core::sbom::{parse_sbom, SbomError, SbomTree, SourceFormat};
use serde_json::Value;

use crate::{read, CliError};

/// SPDX if the document has `spdxVersion`, CycloneDX if it has `bomFormat`,
/// otherwise the native binary encoding.
pub fn detect_format(bytes: &[u8]) -> Result<SourceFormat, SbomError> {
    match serde_json::from_slice::<Value>(bytes) {
        Ok(Value::Object(m)) if m.contains_key("spdxVersion") => Ok(SourceFormat::Spdx),
        Ok(Value::Object(m)) if m.contains_key("bomFormat") => Ok(SourceFormat::CycloneDx),
        Ok(_) => Err(SbomError::UnsupportedFormat("JSON document is neither SPDX nor CycloneDX".into())),
        Err(_) => Ok(SourceFormat::Native),
    }
}

pub fn parse_any(bytes: &[u8]) -> Result<SbomTree, SbomError> {
    parse_sbom(bytes, detect_format(bytes)?)
}

pub fn load_sbom(path: &Path) -> Result<SbomTree, CliError> {
    Ok(parse_any(&read(path)?)?)
}

pub fn load_policy(path: &Path) -> Result<RedactionPolicy, CliError> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::PolicyNotFound(path.to_path_buf()),
        _ => CliError::io(path)(e),
    })?;
    Ok(parse_policy(&bytes)?)
}

pub fn load_container(path: &Path) -> Result<RedactedSbom, CliError> {
    Ok(read_container(&read(path)?)?)
}

/// A consumer key: either the raw key blob or the key service's JSON grant.
pub fn load_key(path: &Path) -> Result<AttributeSecretKey, CliError> {
    let bytes = read(path)?;
    let blob = match serde_json::from_slice::<Value>(&bytes) {
        Ok(v) => {
            let b64 = v
                .get("key")
                .and_then(Value::as_str)
                .ok_or_else(|| CliError::Usage(format!("{}: JSON key file without a \"key\" field", path.display())))?;
            b64_decode(b64).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        Err(_) => bytes,
    };
    AttributeSecretKey::from_bytes(&blob)
        .map_err(|e| CliError::Usage(format!("{}: not a decryption key ({e})", path.display())))
}

/// The package URL indexing a container, when its root metadata is public.
pub fn public_index(sbom: &RedactedSbom) -> Option<String> {
    match &sbom.root.meta {
        Body::Public(p) => Reader::new(p).lp_str().ok(),
        Body::Redacted(_) => None,
    }
}

/// `hello.spdx.json` -> `hello`.
pub fn stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "sbom".into());
    let mut s = name.as_str();
    for suffix in [".json", ".spdx", ".cdx", ".cyclonedx", ".bom", ".petra"] {
        s = s.strip_suffix(suffix).unwrap_or(s);
    }
    if s.is_empty() { "sbom".into() } else { s.to_owned() }
}
