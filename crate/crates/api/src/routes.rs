use std::collections::{BTreeMap, HashMap};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use rc_core::aggregate::{aggregate_video, find_peaks, video_questions, video_tracks};
use rc_core::analytics::{usage_stats, usage_table, write_usage_csv};
use rc_core::domain::validate_response;
use rc_core::password::{decoy_hash, verify_password};
use rc_core::{LoginId, PlaySegment, RawResponse, ResponseType, Role, Video, VideoId};
use serde_json::{json, Map, Value};

use crate::auth::Caller;
use crate::config::Sharing;
use crate::error::ApiError;
use crate::AppState;

pub(crate) fn routes() -> Router<AppState> {
    Router::new()
        .route("/api/login", post(login))
        .route("/api/logout", post(logout))
        .route("/api/videos", get(list_videos))
        .route("/api/videos/{id}", get(get_video))
        .route("/api/videos/{id}/responses", post(post_response))
        .route("/api/videos/{id}/play-events", post(post_play_events))
        .route("/api/videos/{id}/aggregate", get(get_aggregate))
        .route("/api/videos/{id}/tracks", get(get_tracks))
        .route("/api/videos/{id}/questions", get(get_questions))
        .route("/api/videos/{id}/stats", get(get_stats))
        .route("/api/export/usage.csv", get(export_usage_csv))
}

/// A JSON object body whose fields are pulled out one by one so that errors
/// can name the offending field.
struct Fields {
    map: Map<String, Value>,
    index: Option<usize>,
}

impl Fields {
    fn parse(body: &[u8]) -> Result<Self, ApiError> {
        match serde_json::from_slice::<Value>(body) {
            Ok(Value::Object(map)) => Ok(Self { map, index: None }),
            Ok(_) => Err(ApiError::bad_request("body must be a JSON object")),
            Err(e) => Err(ApiError::bad_request(format!("malformed JSON: {e}"))),
        }
    }

    fn element(value: Value, index: usize) -> Result<Self, ApiError> {
        match value {
            Value::Object(map) => Ok(Self {
                map,
                index: Some(index),
            }),
            _ => Err(ApiError::BadRequest {
                message: format!("segment {index}: must be an object"),
                field: None,
                index: Some(index),
            }),
        }
    }

    fn error(&self, field: &'static str, what: &str) -> ApiError {
        let message = match self.index {
            Some(i) => format!("segment {i}: {field} {what}"),
            None => format!("{field} {what}"),
        };
        ApiError::BadRequest {
            message,
            field: Some(field),
            index: self.index,
        }
    }

    fn opt(&self, field: &'static str) -> Option<&Value> {
        self.map.get(field).filter(|v| !v.is_null())
    }

    fn string(&self, field: &'static str) -> Result<String, ApiError> {
        match self.opt(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(self.error(field, "must be a string")),
            None => Err(self.error(field, "is required")),
        }
    }

    fn opt_string(&self, field: &'static str) -> Result<Option<String>, ApiError> {
        match self.opt(field) {
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.error(field, "must be a string")),
            None => Ok(None),
        }
    }

    fn number(&self, field: &'static str) -> Result<f64, ApiError> {
        match self.opt(field) {
            Some(v) => v
                .as_f64()
                .ok_or_else(|| self.error(field, "must be a number")),
            None => Err(self.error(field, "is required")),
        }
    }

    fn opt_time(&self, field: &'static str) -> Result<Option<DateTime<Utc>>, ApiError> {
        match self.opt_string(field)? {
            None => Ok(None),
            Some(s) => DateTime::parse_from_rfc3339(&s)
                .map(|t| Some(t.with_timezone(&Utc)))
                .map_err(|_| self.error(field, "must be an RFC 3339 timestamp")),
        }
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> T + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))
}

async fn login(State(state): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let fields = Fields::parse(&body)?;
    let login_id = LoginId::new(fields.string("login_id")?);
    let password = fields.string("password")?;
    let account = state.store.snapshot().account(&login_id).cloned();
    let stored_hash = account
        .as_ref()
        .and_then(|a| a.password_hash.clone())
        .unwrap_or_else(|| decoy_hash().to_owned());
    let verified = blocking(move || verify_password(&password, &stored_hash)).await?;
    let account = match account {
        Some(a) if verified && a.password_hash.is_some() => a,
        _ => return Err(ApiError::BadCredentials),
    };
    let (token, session) = state.sessions.issue(account.login_id, account.role);
    Ok(Json(json!({
        "token": token,
        "role": session.role,
        "display_name": account.display_name,
        "expires_at": session.expires_at,
    })))
}

async fn logout(
    State(state): State<AppState>,
    _caller: Caller,
    headers: axum::http::HeaderMap,
) -> StatusCode {
    if let Some(token) = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
    {
        state.sessions.revoke(token.trim());
    }
    StatusCode::NO_CONTENT
}

fn catalog_entry(v: &Video) -> Value {
    json!({
        "video_id": v.video_id,
        "title": v.title,
        "duration_s": v.duration_s,
        "source_uri": v.source_uri,
        "ordinal": v.ordinal,
    })
}

async fn list_videos(State(state): State<AppState>, _caller: Caller) -> Json<Vec<Value>> {
    Json(
        state
            .store
            .snapshot()
            .videos()
            .into_iter()
            .map(catalog_entry)
            .collect(),
    )
}

async fn get_video(
    State(state): State<AppState>,
    _caller: Caller,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let snapshot = state.store.snapshot();
    let video = snapshot.require_video(&VideoId::new(id))?;
    Ok(Json(catalog_entry(video)))
}

async fn post_response(
    State(state): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<HttpResponse, ApiError> {
    if !matches!(caller.role(), Role::Student | Role::Teacher) {
        return Err(ApiError::Forbidden);
    }
    let video_id = VideoId::new(id);
    let snapshot = state.store.snapshot();
    let video = snapshot.require_video(&video_id)?;
    let fields = Fields::parse(&body)?;
    let raw = RawResponse {
        response_id: fields.string("response_id")?,
        student_id: caller.login_id().to_string(),
        video_id: video_id.to_string(),
        position_s: fields.number("position_s")?,
        rtype: fields.string("rtype")?,
        text: fields.opt_string("text")?,
        created_at: Utc::now(),
    };
    let response = validate_response(raw, video)?;
    if let Some(existing) = snapshot.response(&response.response_id) {
        if existing.value.student_id != response.student_id
            || existing.value.video_id != response.video_id
        {
            return Err(ApiError::Conflict(format!(
                "response_id {} is already in use",
                response.response_id
            )));
        }
    }
    let store = state.store.clone();
    let appended = blocking(move || store.append_response(response)).await??;
    let status = if appended.created {
        StatusCode::CREATED
    } else {
        StatusCode::OK
    };
    Ok((status, Json(json!({ "seq": appended.seq }))).into_response())
}

async fn post_play_events(
    State(state): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<HttpResponse, ApiError> {
    let video_id = VideoId::new(id);
    state.store.snapshot().require_video(&video_id)?;
    let fields = Fields::parse(&body)?;
    let items = match fields.opt("segments") {
        Some(Value::Array(items)) => items.clone(),
        Some(_) => return Err(fields.error("segments", "must be an array")),
        None => return Err(fields.error("segments", "is required")),
    };
    let now = Utc::now();
    let segments = items
        .into_iter()
        .enumerate()
        .map(|(index, item)| {
            let f = Fields::element(item, index)?;
            Ok(PlaySegment {
                student_id: caller.login_id().clone(),
                video_id: video_id.clone(),
                start_pos_s: f.number("start_pos_s")?,
                end_pos_s: f.number("end_pos_s")?,
                playback_rate: f.number("playback_rate")?,
                recorded_at: f.opt_time("recorded_at")?.unwrap_or(now),
            })
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    let store = state.store.clone();
    let seqs = blocking(move || store.append_play_segments(segments)).await??;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "accepted": seqs.len() })),
    )
        .into_response())
}

fn query_number(
    query: &HashMap<String, String>,
    name: &'static str,
) -> Result<Option<f64>, ApiError> {
    match query.get(name) {
        None => Ok(None),
        Some(s) => match s.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(ApiError::BadRequest {
                message: format!("{name} must be a number, got {s:?}"),
                field: Some(name),
                index: None,
            }),
        },
    }
}

async fn get_aggregate(
    State(state): State<AppState>,
    _caller: Caller,
    Path(id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Json<Value>, ApiError> {
    let width = query_number(&query, "bin_width_s")?.unwrap_or(state.config.bin_width_s);
    let peaks = match query.get("peaks") {
        None => None,
        Some(s) => Some(
            s.trim()
                .parse::<usize>()
                .map_err(|_| ApiError::BadRequest {
                    message: format!("peaks must be a non-negative integer, got {s:?}"),
                    field: Some("peaks"),
                    index: None,
                })?,
        ),
    };
    let snapshot = state.store.snapshot();
    let series = aggregate_video(&snapshot, &VideoId::new(id), width)?;
    let mut body = serde_json::to_value(&series).map_err(|e| ApiError::Internal(e.to_string()))?;
    if let Some(k) = peaks {
        let mut by_type = BTreeMap::new();
        for t in ResponseType::ALL {
            by_type.insert(t.as_str(), find_peaks(&series, t, k)?);
        }
        body["peaks"] = json!(by_type);
    }
    Ok(Json(body))
}

/// Whether `role` may read another student's responses individually.
fn may_see(sharing: Sharing, role: Role, per_student: bool) -> bool {
    role.is_staff()
        || match sharing {
            Sharing::Open => true,
            Sharing::ClassShared => !per_student,
            Sharing::TeacherOnly => false,
        }
}

async fn get_tracks(
    State(state): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let video_id = VideoId::new(id);
    let snapshot = state.store.snapshot();
    snapshot.require_video(&video_id)?;
    if !may_see(state.config.sharing, caller.role(), true) {
        return Err(ApiError::Forbidden);
    }
    let tracks = video_tracks(&snapshot, &video_id, state.config.anonymize)?;
    Ok(Json(json!({ "video_id": video_id, "tracks": tracks })))
}

async fn get_questions(
    State(state): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let video_id = VideoId::new(id);
    let snapshot = state.store.snapshot();
    snapshot.require_video(&video_id)?;
    if !may_see(state.config.sharing, caller.role(), false) {
        return Err(ApiError::Forbidden);
    }
    let questions = video_questions(&snapshot, &video_id, state.config.anonymize)?;
    Ok(Json(
        json!({ "video_id": video_id, "questions": questions }),
    ))
}

async fn get_stats(
    State(state): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    caller.require_staff()?;
    let stats = usage_stats(&state.store.snapshot(), &VideoId::new(id))?;
    Ok(Json(
        serde_json::to_value(stats).map_err(|e| ApiError::Internal(e.to_string()))?,
    ))
}

async fn export_usage_csv(
    State(state): State<AppState>,
    caller: Caller,
) -> Result<HttpResponse, ApiError> {
    caller.require_staff()?;
    let rows = usage_table(&state.store.snapshot())?;
    let mut out = Vec::new();
    write_usage_csv(&rows, &mut out).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8"),
            (
                header::CONTENT_DISPOSITION,
                "attachment; filename=\"usage.csv\"",
            ),
        ],
        out,
    )
        .into_response())
}
