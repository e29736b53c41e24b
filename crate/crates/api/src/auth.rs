//! Bearer-token sessions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::FromRequestParts;
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use chrono::{DateTime, Utc};
use rand::RngCore;
use rc_core::{LoginId, Role};

use crate::error::ApiError;
use crate::AppState;

/// 32 random bytes, hex encoded.
const TOKEN_BYTES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub login_id: LoginId,
    pub role: Role,
    pub expires_at: DateTime<Utc>,
}

/// In-memory session table. Tokens do not survive a restart.
#[derive(Debug, Clone)]
pub struct SessionStore {
    ttl: Duration,
    sessions: Arc<Mutex<HashMap<String, Session>>>,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            sessions: Arc::default(),
        }
    }

    pub fn issue(&self, login_id: LoginId, role: Role) -> (String, Session) {
        let ttl = chrono::Duration::from_std(self.ttl).unwrap_or(chrono::Duration::MAX);
        let expires_at = Utc::now()
            .checked_add_signed(ttl)
            .unwrap_or(DateTime::<Utc>::MAX_UTC);
        self.issue_until(login_id, role, expires_at)
    }

    pub fn issue_until(
        &self,
        login_id: LoginId,
        role: Role,
        expires_at: DateTime<Utc>,
    ) -> (String, Session) {
        let mut bytes = [0u8; TOKEN_BYTES];
        rand::rng().fill_bytes(&mut bytes);
        let token: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        let session = Session {
            login_id,
            role,
            expires_at,
        };
        self.lock().insert(token.clone(), session.clone());
        (token, session)
    }

    /// The live session for `token`. Expired sessions are dropped.
    pub fn validate(&self, token: &str) -> Option<Session> {
        let mut sessions = self.lock();
        let session = sessions.get(token)?.clone();
        if session.expires_at <= Utc::now() {
            sessions.remove(token);
            return None;
        }
        Some(session)
    }

    pub fn revoke(&self, token: &str) {
        self.lock().remove(token);
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Session>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Extractor for the caller's session; rejects with 401.
#[derive(Debug, Clone)]
pub struct Caller(pub Session);

impl Caller {
    pub fn role(&self) -> Role {
        self.0.role
    }

    pub fn login_id(&self) -> &LoginId {
        &self.0.login_id
    }

    pub fn require_staff(&self) -> Result<(), ApiError> {
        if self.role().is_staff() {
            Ok(())
        } else {
            Err(ApiError::Forbidden)
        }
    }
}

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        state: &AppState,
    ) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .ok_or(ApiError::Unauthorized)?;
        state
            .sessions
            .validate(token)
            .map(Caller)
            .ok_or(ApiError::Unauthorized)
    }
}
