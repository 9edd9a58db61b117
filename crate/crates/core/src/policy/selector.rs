use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PolicyError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    /// `*`: exactly one segment.
    Any,
    /// `**`: zero or more segments.
    Recursive,
}

/// A dotted path pattern over node names, e.g. `**.package.version`.
///
/// Paths start at the root SBOM node (named `sbom`). A literal matches a node
/// whose name equals it either verbatim or after stripping the JSON mapping
/// decorations (`version#json`, `creators[2]`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSelector {
    segments: Vec<Segment>,
    source: String,
}

impl PathSelector {
    pub fn parse(s: &str) -> Result<Self, PolicyError> {
        let trimmed = s.trim();
        if trimmed.is_empty() {
            return Err(PolicyError::Syntax("empty path selector".into()));
        }
        let segments = trimmed
            .split('.')
            .map(|seg| match seg {
                "" => Err(PolicyError::Syntax(format!("empty segment in selector {s:?}"))),
                "*" => Ok(Segment::Any),
                "**" => Ok(Segment::Recursive),
                lit => Ok(Segment::Literal(lit.to_owned())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PathSelector { segments, source: trimmed.to_owned() })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn matches<S: AsRef<str>>(&self, path: &[S]) -> bool {
        let names: Vec<&str> = path.iter().map(AsRef::as_ref).collect();
        matches_from(&self.segments, &names)
    }
}

fn literal_matches(lit: &str, name: &str) -> bool {
    lit == name || lit == crate::sbom::base_name(name)
}

fn matches_from(pattern: &[Segment], path: &[&str]) -> bool {
    // reachable[j]: pattern prefix consumed so far can end right before path[j]
    let mut reachable = vec![false; path.len() + 1];
    reachable[0] = true;
    for seg in pattern {
        let mut next = vec![false; path.len() + 1];
        match seg {
            Segment::Recursive => {
                let mut on = false;
                for j in 0..=path.len() {
                    on |= reachable[j];
                    next[j] = on;
                }
            }
            Segment::Any => {
                for j in 0..path.len() {
                    next[j + 1] = reachable[j];
                }
            }
            Segment::Literal(lit) => {
                for j in 0..path.len() {
                    next[j + 1] = reachable[j] && literal_matches(lit, path[j]);
                }
            }
        }
        reachable = next;
    }
    reachable[path.len()]
}

impl fmt::Display for PathSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for PathSelector {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PathSelector::parse(s)
    }
}

impl Serialize for PathSelector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for PathSelector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        PathSelector::parse(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
