use std::fmt;
use std::str::FromStr;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid package URL {input:?}: {reason}")]
pub struct PurlError {
    pub input: String,
    pub reason: &'static str,
}

/// A package URL used as the resolvable index of an SBOM.
///
/// Only the structural grammar `pkg:type/[namespace/]name[@version][?qualifiers][#subpath]`
/// is checked; ecosystem-specific normalisation rules are not applied.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Purl(String);

const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'.')
    .remove(b'-')
    .remove(b'_')
    .remove(b'~');

impl Purl {
    pub fn parse(s: &str) -> Result<Self, PurlError> {
        let err = |reason| PurlError { input: s.to_owned(), reason };
        let rest = s.strip_prefix("pkg:").ok_or_else(|| err("missing pkg: scheme"))?;
        let rest = rest.split('#').next().unwrap_or_default();
        let rest = rest.split('?').next().unwrap_or_default();
        let (ty, path) = rest.split_once('/').ok_or_else(|| err("missing type"))?;
        let mut chars = ty.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() => {}
            _ => return Err(err("type must start with a letter")),
        }
        if !chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '+' | '-')) {
            return Err(err("type has invalid characters"));
        }
        let path = path.trim_matches('/');
        let name_part = path.rsplit('/').next().unwrap_or_default();
        let name = match name_part.rsplit_once('@') {
            Some((name, version)) => {
                if version.is_empty() {
                    return Err(err("empty version"));
                }
                name
            }
            None => name_part,
        };
        if name.is_empty() {
            return Err(err("missing name"));
        }
        if s.chars().any(char::is_whitespace) {
            return Err(err("whitespace"));
        }
        Ok(Purl(s.to_owned()))
    }

    /// `pkg:generic/<name>@<version>` with both components percent-encoded.
    pub fn generic(name: &str, version: &str) -> Result<Self, PurlError> {
        let name = utf8_percent_encode(name, COMPONENT).to_string();
        let version = utf8_percent_encode(version, COMPONENT).to_string();
        Purl::parse(&format!("pkg:generic/{name}@{version}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Percent-encoded form usable as a single file name.
    pub fn to_file_stem(&self) -> String {
        utf8_percent_encode(&self.0, NON_ALPHANUMERIC).to_string()
    }
}

impl FromStr for Purl {
    type Err = PurlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Purl::parse(s)
    }
}

impl fmt::Display for Purl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Purl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Purl({})", self.0)
    }
}

impl Serialize for Purl {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Purl {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Purl::parse(&s).map_err(serde::de::Error::custom)
    }
}
