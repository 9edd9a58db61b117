//! `petra keys`: local key-service setup, test tokens, and HTTP calls to a
//! running key service.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use clap::Subcommand;
use ed25519_dalek::SigningKey;
use petra_core::encoding::b64_encode;
use petra_kms::http::{KeyResponse, RotateResponse};
use petra_kms::service::read_hex_key;
use petra_kms::{IdentityToken, KeyService, KmsConfig, PublicInfo, SignedToken, STATE_ENV};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::files::load_key;
use crate::{read, write, write_out, CliError, Config, EXIT_OK};

#[derive(Subcommand, Debug)]
pub enum KeysCommand {
    /// Initialize key-service state (parameters, master key, signing keys).
    Setup {
        #[arg(long, env = STATE_ENV)]
        state: PathBuf,
        #[arg(long, default_value = "bsw07")]
        scheme: String,
        /// Token claims copied into attributes.
        #[arg(long = "map-claim", default_values = ["role", "org", "cert"])]
        mapped_claims: Vec<String>,
        /// Also write a petra.toml pointing at the new state.
        #[arg(long)]
        write_config: Option<PathBuf>,
    },
    /// Mint an identity token signed by the test authority key.
    Token {
        #[arg(long)]
        subject: String,
        /// `claim=value`; repeatable.
        #[arg(long = "claim")]
        claims: Vec<String>,
        #[arg(long)]
        authority_key: PathBuf,
        #[arg(long, default_value_t = 30)]
        valid_days: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exchange a token for a decryption key.
    Issue {
        #[arg(long)]
        token: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fetch the current (possibly rotated) key for a token's subject.
    Current {
        #[arg(long)]
        token: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reissue keys for the current window.
    Rotate {
        /// Rotate as of this instant (RFC 3339) instead of the service clock.
        #[arg(long)]
        now: Option<DateTime<Utc>>,
    },
    /// Revoke a subject so it gets no further keys.
    Revoke {
        #[arg(long)]
        subject: String,
    },
    /// Trade a key for one holding a subset of its attributes.
    Delegate {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "attribute", required = true)]
        subset: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Download public parameters and signing public keys.
    Params {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn post<T: DeserializeOwned>(cfg: &Config, route: &str, body: &Value) -> Result<Option<T>, CliError> {
    let url = format!("{}{route}", cfg.kms_url()?.trim_end_matches('/'));
    let resp = reqwest::blocking::Client::new()
        .post(&url)
        .json(body)
        .send()
        .map_err(|e| CliError::Kms(format!("{url}: {e}")))?;
    decode(resp, &url)
}

fn decode<T: DeserializeOwned>(resp: reqwest::blocking::Response, url: &str) -> Result<Option<T>, CliError> {
    let status = resp.status();
    let bytes = resp.bytes().map_err(|e| CliError::Kms(format!("{url}: {e}")))?;
    if !status.is_success() {
        let v: Value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        let code = v["error"]["code"].as_str().unwrap_or("HTTP_ERROR");
        let msg = v["error"]["message"].as_str().unwrap_or(status.as_str());
        return Err(CliError::Kms(format!("{code}: {msg}")));
    }
    if bytes.is_empty() {
        return Ok(None);
    }
    serde_json::from_slice(&bytes).map(Some).map_err(|e| CliError::Kms(format!("{url}: unexpected response: {e}")))
}

fn load_token(path: &Path) -> Result<SignedToken, CliError> {
    serde_json::from_slice(&read(path)?).map_err(|e| CliError::Usage(format!("{}: not a token ({e})", path.display())))
}

fn save_grant(out: &mut dyn Write, path: &Path, grant: Option<KeyResponse>) -> Result<(), CliError> {
    let g = grant.ok_or_else(|| CliError::Kms("empty response".into()))?;
    write(path, &g.key)?;
    write_out(out, format!("{} {} expiry={}\n", g.subject, g.attributes.join(","), g.expiry))
}

pub fn keys(cfg: &Config, cmd: KeysCommand, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        KeysCommand::Setup { state, scheme, mapped_claims, write_config } => {
            KeyService::setup(&state, KmsConfig { scheme, mapped_claims })?;
            if let Some(path) = write_config {
                let abs = std::fs::canonicalize(&state).map_err(CliError::io(&state))?;
                let c = Config {
                    params: Some(abs.join(petra_kms::service::PARAMS_FILE)),
                    generator_public: Some(abs.join("generator.pub")),
                    producer_public: Some(abs.join("producer.pub")),
                    generator_key: Some(abs.join("generator.key")),
                    producer_key: Some(abs.join("producer.key")),
                    store: cfg.store.clone(),
                    kms_url: cfg.kms_url.clone(),
                };
                write(&path, toml::to_string(&c).expect("config serializes").as_bytes())?;
            }
            write_out(out, format!("initialized {}\n", state.display()))?;
        }
        KeysCommand::Token { subject, claims, authority_key, valid_days, out: dest } => {
            let authority = SigningKey::from_bytes(&read_hex_key(&authority_key)?);
            let mut map = BTreeMap::new();
            for c in claims {
                let (k, v) = c.split_once('=').ok_or_else(|| CliError::Usage(format!("claim {c:?} is not name=value")))?;
                map.insert(k.to_owned(), v.to_owned());
            }
            let now = Utc::now();
            let token = IdentityToken { subject, claims: map, not_before: now - Duration::minutes(5), not_after: now + Duration::days(valid_days) }
                .sign(&authority);
            write(&dest, serde_json::to_string_pretty(&token).expect("token serializes").as_bytes())?;
        }
        KeysCommand::Issue { token, out: dest } => {
            let grant = post(cfg, "/keys", &json!({ "token": load_token(&token)? }))?;
            save_grant(out, &dest, grant)?;
        }
        KeysCommand::Current { token, out: dest } => {
            let grant = post(cfg, "/keys/current", &json!({ "token": load_token(&token)? }))?;
            save_grant(out, &dest, grant)?;
        }
        KeysCommand::Rotate { now } => {
            let r: RotateResponse =
                post(cfg, "/rotate", &json!({ "now": now }))?.ok_or_else(|| CliError::Kms("empty response".into()))?;
            write_out(out, format!("reissued {} key(s) for {}\n", r.reissued, r.window))?;
        }
        KeysCommand::Revoke { subject } => {
            post::<Value>(cfg, "/revoke", &json!({ "subject": subject }))?;
            write_out(out, format!("revoked {subject}\n"))?;
        }
        KeysCommand::Delegate { key, subset, out: dest } => {
            let parent = load_key(&key)?;
            let grant = post(cfg, "/keys/delegate", &json!({ "parent_key": b64_encode(&parent.to_bytes()), "subset": subset }))?;
            save_grant(out, &dest, grant)?;
        }
        KeysCommand::Params { out_dir } => {
            let url = format!("{}/params", cfg.kms_url()?.trim_end_matches('/'));
            let resp = reqwest::blocking::get(&url).map_err(|e| CliError::Kms(format!("{url}: {e}")))?;
            let info: PublicInfo = decode(resp, &url)?.ok_or_else(|| CliError::Kms("empty response".into()))?;
            std::fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;
            write(&out_dir.join(petra_kms::service::PARAMS_FILE), &info.params)?;
            write(&out_dir.join("generator.pub"), format!("{}\n", info.generator_public).as_bytes())?;
            write(&out_dir.join("producer.pub"), format!("{}\n", info.producer_public).as_bytes())?;
            write_out(out, format!("{} parameters written to {}\n", info.scheme, out_dir.display()))?;
        }
    }
    Ok(EXIT_OK)
}
