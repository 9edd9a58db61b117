//! JSON-over-HTTP front end. Admin routes (`/revoke`, `/rotate`) carry no
//! authentication of their own; bind them to a trusted interface.

use std::sync::Arc;

use axum::extract::{Json, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::{DateTime, Utc};
use petra_core::abkem::AttributeSecretKey;
use petra_core::encoding::b64;
use petra_core::month::Month;
use petra_core::policy::AttributeSet;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::service::{KeyGrant, KeyService, PublicInfo};
use crate::token::SignedToken;
use crate::KmsError;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    service: Arc<KeyService>,
    clock: Clock,
}

impl AppState {
    pub fn new(service: KeyService) -> Self {
        AppState::with_clock(service, Arc::new(Utc::now))
    }

    pub fn with_clock(service: KeyService, clock: Clock) -> Self {
        AppState { service: Arc::new(service), clock }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KeyRequest {
    pub token: SignedToken,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KeyResponse {
    pub subject: String,
    #[serde(with = "b64")]
    pub key: Vec<u8>,
    pub attributes: Vec<String>,
    pub expiry: Month,
    pub issued_at: DateTime<Utc>,
}

impl From<KeyGrant> for KeyResponse {
    fn from(g: KeyGrant) -> Self {
        KeyResponse {
            subject: g.subject,
            attributes: g.key.attributes().iter().map(str::to_owned).collect(),
            key: g.key.to_bytes(),
            expiry: g.expiry_window,
            issued_at: g.issued_at,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DelegateRequest {
    /// The presented parent key, base64.
    #[serde(with = "b64")]
    pub parent_key: Vec<u8>,
    pub subset: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RevokeRequest {
    pub subject: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct RotateRequest {
    /// Overrides the service clock, for scheduled or back-filled rotations.
    #[serde(default)]
    pub now: Option<DateTime<Utc>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RotateResponse {
    pub reissued: usize,
    pub window: Month,
}

impl IntoResponse for KmsError {
    fn into_response(self) -> Response {
        let status = match &self {
            KmsError::AuthenticationFailure => StatusCode::UNAUTHORIZED,
            KmsError::ExpiredToken | KmsError::Revoked(_) => StatusCode::FORBIDDEN,
            KmsError::NoGrant(_) => StatusCode::NOT_FOUND,
            KmsError::MalformedSubject(_)
            | KmsError::BadClaim(_)
            | KmsError::BadDelegation(_)
            | KmsError::BadRequest(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        // Internal errors are logged, not echoed: they may name state paths.
        let message = if status == StatusCode::INTERNAL_SERVER_ERROR {
            eprintln!("petra-kms: {self}");
            "internal error".to_owned()
        } else {
            self.to_string()
        };
        (status, Json(json!({ "error": { "code": self.code(), "message": message } }))).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/params", get(params))
        .route("/keys", post(issue))
        .route("/keys/current", post(current))
        .route("/keys/delegate", post(delegate))
        .route("/revoke", post(revoke))
        .route("/rotate", post(rotate))
        .with_state(state)
}

async fn params(State(s): State<AppState>) -> Result<Json<PublicInfo>, KmsError> {
    Ok(Json(s.service.public_info()?))
}

async fn issue(State(s): State<AppState>, Json(req): Json<KeyRequest>) -> Result<Json<KeyResponse>, KmsError> {
    Ok(Json(s.service.issue(&req.token, (s.clock)())?.into()))
}

async fn current(State(s): State<AppState>, Json(req): Json<KeyRequest>) -> Result<Json<KeyResponse>, KmsError> {
    Ok(Json(s.service.current(&req.token, (s.clock)())?.into()))
}

async fn delegate(
    State(s): State<AppState>,
    Json(req): Json<DelegateRequest>,
) -> Result<Json<KeyResponse>, KmsError> {
    let parent = AttributeSecretKey::from_bytes(&req.parent_key)
        .map_err(|e| KmsError::BadRequest(format!("parent key: {e}")))?;
    let subset = AttributeSet::from_iter(req.subset).map_err(|e| KmsError::BadRequest(e.to_string()))?;
    Ok(Json(s.service.delegate(&parent, &subset, (s.clock)())?.into()))
}

async fn revoke(State(s): State<AppState>, Json(req): Json<RevokeRequest>) -> Result<StatusCode, KmsError> {
    s.service.revoke(&req.subject, (s.clock)())?;
    Ok(StatusCode::NO_CONTENT)
}

async fn rotate(State(s): State<AppState>, body: Option<Json<RotateRequest>>) -> Result<Json<RotateResponse>, KmsError> {
    let now = body.and_then(|Json(r)| r.now).unwrap_or_else(|| (s.clock)());
    let reissued = s.service.rotate(now)?;
    Ok(Json(RotateResponse { reissued, window: Month::of(now) }))
}
