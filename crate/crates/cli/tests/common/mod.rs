//! A scratch deployment: key-service state, config, store and helpers to run
//! `petra` in-process.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use ed25519_dalek::SigningKey;
use petra_kms::service::read_hex_key;
use petra_kms::{IdentityToken, KeyService};
use tempfile::TempDir;

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    /// The `error.code` of a JSON diagnostic on stderr.
    pub fn error_code(&self) -> Option<String> {
        let v: serde_json::Value = serde_json::from_str(self.stderr.lines().last()?).ok()?;
        v["error"]["code"].as_str().map(str::to_owned)
    }
}

pub struct World {
    pub dir: TempDir,
    pub config: PathBuf,
    pub state: PathBuf,
}

pub fn june() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 6, 15, 12, 0, 0).unwrap()
}

/// Runs `petra` with `args` (no program name) and captures its output.
pub fn petra_raw<S: AsRef<str>>(args: &[S]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("petra".to_owned()).chain(args.iter().map(|a| a.as_ref().to_owned()));
    let code = petra_cli::run_with(argv, &mut out, &mut err);
    Outcome { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

impl World {
    pub fn new(scheme: &str) -> World {
        let dir = tempfile::tempdir().unwrap();
        let state = dir.path().join("kms");
        let config = dir.path().join("petra.toml");
        let store = dir.path().join("store");
        let o = petra_raw(&[
            "keys",
            "setup",
            "--state",
            state.to_str().unwrap(),
            "--scheme",
            scheme,
            "--store",
            store.to_str().unwrap(),
            "--write-config",
            config.to_str().unwrap(),
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        World { dir, config, state }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn file(&self, name: &str, contents: impl AsRef<[u8]>) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, contents).unwrap();
        p
    }

    pub fn petra<S: AsRef<str>>(&self, args: &[S]) -> Outcome {
        let mut all = vec!["--config".to_owned(), self.config.display().to_string()];
        all.extend(args.iter().map(|a| a.as_ref().to_owned()));
        petra_raw(&all)
    }

    pub fn authority(&self) -> SigningKey {
        SigningKey::from_bytes(&read_hex_key(&self.state.join("authority.key")).unwrap())
    }

    /// Issues a key through the service library (no HTTP) and saves it.
    pub fn key(&self, subject: &str, claims: &[(&str, &str)], now: DateTime<Utc>) -> PathBuf {
        let token = IdentityToken {
            subject: subject.into(),
            claims: claims.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<BTreeMap<_, _>>(),
            not_before: now - Duration::days(1),
            not_after: now + Duration::days(90),
        }
        .sign(&self.authority());
        let grant = KeyService::open(&self.state).unwrap().issue(&token, now).unwrap();
        let p = self.path(&format!("{}.key", subject.replace('@', "_at_")));
        std::fs::write(&p, grant.key.to_bytes()).unwrap();
        p
    }
}

pub fn s(p: &Path) -> String {
    p.display().to_string()
}
