//! Shared entities and the rules that keep them well formed.
//!
//! Nothing in here touches storage or transport. Every constructor that
//! accepts outside input goes through a `validate*` function that either
//! returns a value satisfying all invariants or a [`ValidationError`]
//! naming the offending field.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Upper bound on question text, counted in characters.
pub const MAX_QUESTION_CHARS: usize = 2000;

/// Upper bound on any identifier, counted in bytes.
pub const MAX_ID_LEN: usize = 128;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Catalog identifier of a video.
    VideoId
);
string_id!(
    /// Login identifier of an account; students are referenced by it.
    LoginId
);
string_id!(
    /// Client-generated identifier of a response, used for idempotent retries.
    ResponseId
);

/// The four reactions a student can attach to a video position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseType {
    #[serde(alias = "Interesting")]
    Interesting,
    #[serde(alias = "Important")]
    Important,
    #[serde(alias = "Difficult")]
    Difficult,
    #[serde(alias = "Question")]
    Question,
}

impl ResponseType {
    pub const ALL: [ResponseType; 4] = [
        ResponseType::Interesting,
        ResponseType::Important,
        ResponseType::Difficult,
        ResponseType::Question,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResponseType::Interesting => "interesting",
            ResponseType::Important => "important",
            ResponseType::Difficult => "difficult",
            ResponseType::Question => "question",
        }
    }

    /// Position of this type in [`ResponseType::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ResponseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResponseType {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ResponseType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ValidationError::UnknownType(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("{field} must not be empty")]
    EmptyField { field: &'static str },
    #[error("{field} is longer than {MAX_ID_LEN} bytes")]
    IdTooLong { field: &'static str },
    #[error("{field} must be a finite number")]
    NotFinite { field: &'static str },
    #[error("position out of range: {position} not in [0, {duration}]")]
    PositionOutOfRange { position: f64, duration: f64 },
    #[error("unknown response type {0:?}")]
    UnknownType(String),
    #[error("text required for question responses")]
    TextRequired,
    #[error("text on non-question type")]
    TextOnNonQuestion,
    #[error("text over length: {chars} characters, at most {MAX_QUESTION_CHARS} allowed")]
    TextTooLong { chars: usize },
    #[error("response belongs to video {found}, expected {expected}")]
    VideoMismatch { expected: VideoId, found: VideoId },
    #[error("segment ends before it starts ({start} > {end})")]
    SegmentInverted { start: f64, end: f64 },
    #[error("segment [{start}, {end}] outside [0, {duration}]")]
    SegmentOutOfRange { start: f64, end: f64, duration: f64 },
    #[error("playback_rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("duration_s must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("ordinal must be at least 1")]
    ZeroOrdinal,
    #[error("likert value {0} outside 1..=5")]
    LikertOutOfRange(i64),
    #[error("invalid {kind} survey value {value:?}")]
    InvalidSurveyValue { kind: SurveyKind, value: String },
}

impl ValidationError {
    /// Name of the JSON field the error refers to.
    pub fn field(&self) -> &'static str {
        use ValidationError::*;
        match self {
            EmptyField { field } | IdTooLong { field } | NotFinite { field } => field,
            PositionOutOfRange { .. } => "position_s",
            UnknownType(_) => "rtype",
            TextRequired | TextOnNonQuestion | TextTooLong { .. } => "text",
            VideoMismatch { .. } => "video_id",
            SegmentInverted { .. } | SegmentOutOfRange { .. } => "end_pos_s",
            NonPositiveRate(_) => "playback_rate",
            NonPositiveDuration(_) => "duration_s",
            ZeroOrdinal => "ordinal",
            LikertOutOfRange(_) | InvalidSurveyValue { .. } => "value",
        }
    }
}

fn check_id(field: &'static str, id: &str) -> Result<(), ValidationError> {
    if id.trim().is_empty() {
        Err(ValidationError::EmptyField { field })
    } else if id.len() > MAX_ID_LEN {
        Err(ValidationError::IdTooLong { field })
    } else {
        Ok(())
    }
}

fn check_finite(field: &'static str, v: f64) -> Result<(), ValidationError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ValidationError::NotFinite { field })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Video {
    pub video_id: VideoId,
    pub title: String,
    pub duration_s: f64,
    pub source_uri: String,
    #[serde(default)]
    pub lecture_label: String,
    pub ordinal: u32,
}

impl Video {
    /// Checks the invariants that hold for a single video in isolation.
    /// Ordinal uniqueness is a catalog property and is enforced by the store.
    pub fn validate(&self) -> Result<(), ValidationError> {
        check_id("video_id", self.video_id.as_str())?;
        if self.title.trim().is_empty() {
            return Err(ValidationError::EmptyField { field: "title" });
        }
        check_finite("duration_s", self.duration_s)?;
        if self.duration_s <= 0.0 {
            return Err(ValidationError::NonPositiveDuration(self.duration_s));
        }
        if self.ordinal == 0 {
            return Err(ValidationError::ZeroOrdinal);
        }
        Ok(())
    }

    pub fn contains_position(&self, position_s: f64) -> bool {
        (0.0..=self.duration_s).contains(&position_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Student,
    Teacher,
    Admin,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Student => "student",
            Role::Teacher => "teacher",
            Role::Admin => "admin",
        }
    }

    pub fn is_staff(self) -> bool {
        matches!(self, Role::Teacher | Role::Admin)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "student" => Ok(Role::Student),
            "teacher" => Ok(Role::Teacher),
            "admin" => Ok(Role::Admin),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAccount {
    pub login_id: LoginId,
    /// PHC-format salted hash. `None` for accounts that cannot log in,
    /// e.g. ones imported from an export that omitted hashes.
    #[serde(default)]
    pub password_hash: Option<String>,
    pub role: Role,
    pub display_name: String,
}

impl UserAccount {
    pub fn validate(&self) -> Result<(), ValidationError> {
        check_id("login_id", self.login_id.as_str())
    }
}

/// One student's reaction to a video position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub response_id: ResponseId,
    pub student_id: LoginId,
    pub video_id: VideoId,
    pub position_s: f64,
    pub rtype: ResponseType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl Response {
    /// Re-checks every invariant of an already typed response against its video.
    pub fn validate(&self, video: &Video) -> Result<(), ValidationError> {
        check_id("response_id", self.response_id.as_str())?;
        check_id("student_id", self.student_id.as_str())?;
        if self.video_id != video.video_id {
            return Err(ValidationError::VideoMismatch {
                expected: video.video_id.clone(),
                found: self.video_id.clone(),
            });
        }
        check_position(self.position_s, video)?;
        check_text(self.rtype, self.text.as_deref()).map(|_| ())
    }
}

fn check_position(position_s: f64, video: &Video) -> Result<(), ValidationError> {
    check_finite("position_s", position_s)?;
    if video.contains_position(position_s) {
        Ok(())
    } else {
        Err(ValidationError::PositionOutOfRange {
            position: position_s,
            duration: video.duration_s,
        })
    }
}

fn check_text(rtype: ResponseType, text: Option<&str>) -> Result<Option<String>, ValidationError> {
    let trimmed = text.map(str::trim).filter(|t| !t.is_empty());
    match (rtype, trimmed) {
        (ResponseType::Question, None) => Err(ValidationError::TextRequired),
        (ResponseType::Question, Some(t)) => {
            let chars = t.chars().count();
            if chars > MAX_QUESTION_CHARS {
                Err(ValidationError::TextTooLong { chars })
            } else {
                Ok(Some(t.to_owned()))
            }
        }
        (_, Some(_)) => Err(ValidationError::TextOnNonQuestion),
        // Whitespace-only text on a non-question carries no content.
        (_, None) => Ok(None),
    }
}

/// Untyped response fields as they arrive from a client or a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub response_id: String,
    pub student_id: String,
    pub video_id: String,
    pub position_s: f64,
    pub rtype: String,
    #[serde(default)]
    pub text: Option<String>,
    pub created_at: DateTime<Utc>,
}

/// Turns raw response fields into a [`Response`] or names what is wrong with them.
///
/// Question text is stored trimmed.
pub fn validate_response(raw: RawResponse, video: &Video) -> Result<Response, ValidationError> {
    check_id("response_id", &raw.response_id)?;
    check_id("student_id", &raw.student_id)?;
    let video_id = VideoId::new(raw.video_id);
    if video_id != video.video_id {
        return Err(ValidationError::VideoMismatch {
            expected: video.video_id.clone(),
            found: video_id,
        });
    }
    let rtype: ResponseType = raw.rtype.parse()?;
    check_position(raw.position_s, video)?;
    let text = check_text(rtype, raw.text.as_deref())?;
    Ok(Response {
        response_id: ResponseId::new(raw.response_id),
        student_id: LoginId::new(raw.student_id),
        video_id,
        position_s: raw.position_s,
        rtype,
        text,
        created_at: raw.created_at,
    })
}

/// One contiguous interval of a video watched by a student.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaySegment {
    pub student_id: LoginId,
    pub video_id: VideoId,
    pub start_pos_s: f64,
    pub end_pos_s: f64,
    pub playback_rate: f64,
    pub recorded_at: DateTime<Utc>,
}

impl PlaySegment {
    /// Seconds of content covered, independent of playback rate.
    pub fn watched_s(&self) -> f64 {
        self.end_pos_s - self.start_pos_s
    }

    pub fn validate(&self, video: &Video) -> Result<(), ValidationError> {
        check_id("student_id", self.student_id.as_str())?;
        if self.video_id != video.video_id {
            return Err(ValidationError::VideoMismatch {
                expected: video.video_id.clone(),
                found: self.video_id.clone(),
            });
        }
        check_finite("start_pos_s", self.start_pos_s)?;
        check_finite("end_pos_s", self.end_pos_s)?;
        check_finite("playback_rate", self.playback_rate)?;
        if self.start_pos_s > self.end_pos_s {
            return Err(ValidationError::SegmentInverted {
                start: self.start_pos_s,
                end: self.end_pos_s,
            });
        }
        if self.start_pos_s < 0.0 || self.end_pos_s > video.duration_s {
            return Err(ValidationError::SegmentOutOfRange {
                start: self.start_pos_s,
                end: self.end_pos_s,
                duration: video.duration_s,
            });
        }
        if self.playback_rate <= 0.0 {
            return Err(ValidationError::NonPositiveRate(self.playback_rate));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurveyKind {
    Likert,
    Preference,
}

impl fmt::Display for SurveyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurveyKind::Likert => "likert",
            SurveyKind::Preference => "preference",
        })
    }
}

impl FromStr for SurveyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "likert" => Ok(SurveyKind::Likert),
            "preference" => Ok(SurveyKind::Preference),
            other => Err(format!("unknown survey kind {other:?}")),
        }
    }
}

/// Answer to a two-option preference question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Preference {
    A,
    B,
    #[serde(rename = "tie")]
    Tie,
}

impl Preference {
    pub fn as_str(self) -> &'static str {
        match self {
            Preference::A => "A",
            Preference::B => "B",
            Preference::Tie => "tie",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurveyAnswer {
    /// Agreement on a 1..=5 scale.
    Likert(u8),
    Preference(Preference),
}

impl SurveyAnswer {
    pub fn kind(self) -> SurveyKind {
        match self {
            SurveyAnswer::Likert(_) => SurveyKind::Likert,
            SurveyAnswer::Preference(_) => SurveyKind::Preference,
        }
    }

    pub fn likert(value: i64) -> Result<Self, ValidationError> {
        if (1..=5).contains(&value) {
            Ok(SurveyAnswer::Likert(value as u8))
        } else {
            Err(ValidationError::LikertOutOfRange(value))
        }
    }

    /// Parses the textual form used in survey CSV files.
    pub fn parse(kind: SurveyKind, value: &str) -> Result<Self, ValidationError> {
        let v = value.trim();
        let invalid = || ValidationError::InvalidSurveyValue {
            kind,
            value: v.to_owned(),
        };
        match kind {
            SurveyKind::Likert => SurveyAnswer::likert(v.parse().map_err(|_| invalid())?),
            SurveyKind::Preference => match v {
                "A" | "a" => Ok(SurveyAnswer::Preference(Preference::A)),
                "B" | "b" => Ok(SurveyAnswer::Preference(Preference::B)),
                _ if v.eq_ignore_ascii_case("tie") => Ok(SurveyAnswer::Preference(Preference::Tie)),
                _ => Err(invalid()),
            },
        }
    }

    /// Label used in distributions and files.
    pub fn label(self) -> String {
        match self {
            SurveyAnswer::Likert(v) => v.to_string(),
            SurveyAnswer::Preference(p) => p.as_str().to_owned(),
        }
    }
}

/// One respondent's answer to one survey question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SurveyRecord", into = "SurveyRecord")]
pub struct SurveyDatum {
    pub question_id: String,
    pub respondent_id: String,
    pub answer: SurveyAnswer,
}

impl SurveyDatum {
    pub fn validate(&self) -> Result<(), ValidationError> {
        check_id("question_id", &self.question_id)?;
        check_id("respondent_id", &self.respondent_id)?;
        if let SurveyAnswer::Likert(v) = self.answer {
            SurveyAnswer::likert(v.into())?;
        }
        Ok(())
    }
}

/// Wire shape of a [`SurveyDatum`]: `{"question_id", "respondent_id", "kind", "value"}`.
#[derive(Serialize, Deserialize)]
struct SurveyRecord {
    question_id: String,
    respondent_id: String,
    kind: SurveyKind,
    value: serde_json::Value,
}

impl TryFrom<SurveyRecord> for SurveyDatum {
    type Error = ValidationError;

    fn try_from(rec: SurveyRecord) -> Result<Self, Self::Error> {
        let answer = match (&rec.kind, &rec.value) {
            (SurveyKind::Likert, serde_json::Value::Number(n)) => {
                SurveyAnswer::likert(n.as_i64().ok_or_else(|| {
                    ValidationError::InvalidSurveyValue {
                        kind: rec.kind,
                        value: n.to_string(),
                    }
                })?)?
            }
            (kind, serde_json::Value::String(s)) => SurveyAnswer::parse(*kind, s)?,
            (kind, other) => {
                return Err(ValidationError::InvalidSurveyValue {
                    kind: *kind,
                    value: other.to_string(),
                })
            }
        };
        let datum = SurveyDatum {
            question_id: rec.question_id,
            respondent_id: rec.respondent_id,
            answer,
        };
        datum.validate()?;
        Ok(datum)
    }
}

impl From<SurveyDatum> for SurveyRecord {
    fn from(d: SurveyDatum) -> Self {
        let value = match d.answer {
            SurveyAnswer::Likert(v) => serde_json::Value::from(v),
            SurveyAnswer::Preference(p) => serde_json::Value::from(p.as_str()),
        };
        SurveyRecord {
            question_id: d.question_id,
            respondent_id: d.respondent_id,
            kind: d.answer.kind(),
            value,
        }
    }
}
