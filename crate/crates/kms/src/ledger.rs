//! Append-only issuance ledger, one JSON object per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use petra_core::encoding::Hash256;
use petra_core::month::Month;
use serde::{Deserialize, Serialize};

use crate::KmsError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssuedVia {
    Token,
    Rotation,
    Delegation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LedgerEvent {
    Issued { attributes: Vec<String>, expiry: Month, key_fingerprint: Hash256, via: IssuedVia },
    Revoked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub at: DateTime<Utc>,
    pub subject: String,
    #[serde(flatten)]
    pub event: LedgerEvent,
}

#[derive(Debug)]
pub struct Ledger {
    path: PathBuf,
}

impl Ledger {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Ledger { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one entry with a single write; callers serialize appends.
    pub fn append(&self, entry: &LedgerEntry) -> Result<(), KmsError> {
        let mut line = serde_json::to_vec(entry).expect("ledger entries serialize");
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(&line)?;
        f.sync_data()?;
        Ok(())
    }

    pub fn entries(&self) -> Result<Vec<LedgerEntry>, KmsError> {
        let f = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line)
                .map_err(|e| KmsError::Corrupt(format!("ledger line {}: {e}", n + 1)))?;
            out.push(e);
        }
        Ok(out)
    }

    pub fn is_revoked(&self, subject: &str) -> Result<bool, KmsError> {
        Ok(self.entries()?.iter().any(|e| e.subject == subject && e.event == LedgerEvent::Revoked))
    }

    /// Latest token or rotation grant of every non-revoked subject.
    pub fn active(&self) -> Result<Vec<(String, Vec<String>, Month)>, KmsError> {
        let entries = self.entries()?;
        let mut latest: std::collections::BTreeMap<String, (Vec<String>, Month)> = Default::default();
        let mut revoked = std::collections::BTreeSet::new();
        for e in entries {
            match e.event {
                LedgerEvent::Revoked => {
                    revoked.insert(e.subject);
                }
                LedgerEvent::Issued { attributes, expiry, via, .. } if via != IssuedVia::Delegation => {
                    latest.insert(e.subject, (attributes, expiry));
                }
                LedgerEvent::Issued { .. } => {}
            }
        }
        Ok(latest
            .into_iter()
            .filter(|(s, _)| !revoked.contains(s))
            .map(|(s, (a, m))| (s, a, m))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issued(subject: &str, m: &str, via: IssuedVia) -> LedgerEntry {
        LedgerEntry {
            at: Utc::now(),
            subject: subject.into(),
            event: LedgerEvent::Issued {
                attributes: vec!["user:x".into()],
                expiry: m.parse().unwrap(),
                key_fingerprint: Hash256([0; 32]),
                via,
            },
        }
    }

    #[test]
    fn appends_and_tracks_revocation() {
        let dir = tempfile::tempdir().unwrap();
        let l = Ledger::new(dir.path().join("ledger.jsonl"));
        assert!(l.entries().unwrap().is_empty());
        l.append(&issued("a@x", "2025-06", IssuedVia::Token)).unwrap();
        l.append(&issued("b@x", "2025-06", IssuedVia::Token)).unwrap();
        l.append(&issued("a@x", "2025-07", IssuedVia::Rotation)).unwrap();
        l.append(&issued("c@x", "2025-06", IssuedVia::Delegation)).unwrap();
        l.append(&LedgerEntry { at: Utc::now(), subject: "b@x".into(), event: LedgerEvent::Revoked }).unwrap();
        assert_eq!(l.entries().unwrap().len(), 5);
        assert!(l.is_revoked("b@x").unwrap());
        let active = l.active().unwrap();
        assert_eq!(active.len(), 1);
        assert_eq!(active[0].0, "a@x");
        assert_eq!(active[0].2.to_string(), "2025-07");
    }
}
