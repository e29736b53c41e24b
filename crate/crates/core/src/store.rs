//! Append-only persistence for responses, play segments, accounts, videos and
//! survey answers.
//!
//! Each record kind lives in its own JSONL log under the data directory. A log
//! line is the record's domain fields plus `seq`, `appended_at` and
//! `format_version`. `seq` starts at 1 and is gap-free within a log. On open
//! every log is replayed into an in-memory index.
//!
//! Writes are serialized through one writer lock. Readers take a
//! [`Snapshot`], an immutable `Arc` of the index, so a query never observes
//! records appended after it started.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::domain::{
    LoginId, PlaySegment, Response, ResponseId, ResponseType, SurveyDatum, UserAccount,
    ValidationError, Video, VideoId,
};

pub const FORMAT_VERSION: u64 = 1;

/// Maximum time a play segment may sit in the write buffer.
pub const SEGMENT_FLUSH_INTERVAL: Duration = Duration::from_secs(1);

const META_FIELDS: [&str; 3] = ["seq", "appended_at", "format_version"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Response,
    PlaySegment,
    Account,
    Video,
    Survey,
}

impl RecordKind {
    pub const ALL: [RecordKind; 5] = [
        RecordKind::Video,
        RecordKind::Account,
        RecordKind::Response,
        RecordKind::PlaySegment,
        RecordKind::Survey,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            RecordKind::Response => "responses.jsonl",
            RecordKind::PlaySegment => "play_segments.jsonl",
            RecordKind::Account => "accounts.jsonl",
            RecordKind::Video => "videos.jsonl",
            RecordKind::Survey => "survey.jsonl",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Response => "response",
            RecordKind::PlaySegment => "play_segment",
            RecordKind::Account => "account",
            RecordKind::Video => "video",
            RecordKind::Survey => "survey",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        RecordKind::ALL
            .into_iter()
            .find(|k| {
                k.as_str() == s
                    || k.file_name() == s
                    || k.file_name().trim_end_matches(".jsonl") == s
            })
            .ok_or_else(|| format!("unknown record kind {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage I/O failure: {0}")]
    Io(#[from] io::Error),
    #[error("unknown video {0}")]
    UnknownVideo(VideoId),
    #[error("unknown student {0}")]
    UnknownStudent(LoginId),
    #[error("video {0} already exists")]
    DuplicateVideo(VideoId),
    #[error("ordinal {0} is already used by another video")]
    DuplicateOrdinal(u32),
    #[error("login_id {0} already exists")]
    DuplicateAccount(LoginId),
    #[error("respondent {respondent_id} already answered {question_id}")]
    DuplicateSurveyAnswer {
        question_id: String,
        respondent_id: String,
    },
    #[error("invalid {kind} {identity}: {source}")]
    Invalid {
        kind: RecordKind,
        identity: String,
        #[source]
        source: ValidationError,
    },
    #[error("segment {index} of batch: {source}")]
    InvalidSegment {
        index: usize,
        #[source]
        source: ValidationError,
    },
    #[error("corrupt log {}: {}", path.display(), error)]
    Corrupt { path: PathBuf, error: LineError },
}

/// A problem with one line of a JSONL stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "line {}: field {}: {}", self.line, field, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error("import failed: {0}")]
    Io(#[from] io::Error),
    #[error("{} malformed line(s), nothing imported; first: {}", .0.len(), .0[0])]
    Lines(Vec<LineError>),
}

impl ImportError {
    pub fn line_errors(&self) -> &[LineError] {
        match self {
            ImportError::Lines(errors) => errors,
            ImportError::Io(_) => &[],
        }
    }
}

/// A record together with its log metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Stored<T> {
    pub seq: u64,
    pub appended_at: DateTime<Utc>,
    pub value: T,
}

/// Outcome of an idempotent append.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Appended {
    pub seq: u64,
    /// `false` when the record was already present and nothing was written.
    pub created: bool,
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct StoreOptions {
    /// Source of `appended_at` stamps.
    pub clock: Clock,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self {
            clock: Arc::new(Utc::now),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExportOptions {
    /// Keep `password_hash` on account lines. Off by default.
    pub include_password_hashes: bool,
}

/// Filter for [`Snapshot::query_responses`].
#[derive(Debug, Clone)]
pub struct ResponseQuery {
    pub video_id: VideoId,
    pub student_id: Option<LoginId>,
    pub rtype: Option<ResponseType>,
}

impl ResponseQuery {
    pub fn video(video_id: impl Into<VideoId>) -> Self {
        Self {
            video_id: video_id.into(),
            student_id: None,
            rtype: None,
        }
    }

    pub fn student(mut self, student_id: impl Into<LoginId>) -> Self {
        self.student_id = Some(student_id.into());
        self
    }

    pub fn rtype(mut self, rtype: ResponseType) -> Self {
        self.rtype = Some(rtype);
        self
    }
}

/// Immutable view of the store at one point in the log.
pub type Snapshot = Arc<State>;

#[derive(Debug, Clone, Default)]
pub struct State {
    videos: Vec<Stored<Video>>,
    video_index: HashMap<VideoId, usize>,
    ordinals: HashMap<u32, VideoId>,
    accounts: Vec<Stored<UserAccount>>,
    account_index: HashMap<LoginId, usize>,
    responses: Vec<Stored<Response>>,
    response_index: HashMap<ResponseId, usize>,
    responses_by_video: HashMap<VideoId, Vec<usize>>,
    segments: Vec<Stored<PlaySegment>>,
    segments_by_video: HashMap<VideoId, Vec<usize>>,
    survey: Vec<Stored<SurveyDatum>>,
    survey_index: HashMap<(String, String), usize>,
}

impl State {
    /// Highest sequence number in the log of `kind`; 0 when empty.
    pub fn seq(&self, kind: RecordKind) -> u64 {
        (match kind {
            RecordKind::Response => self.responses.len(),
            RecordKind::PlaySegment => self.segments.len(),
            RecordKind::Account => self.accounts.len(),
            RecordKind::Video => self.videos.len(),
            RecordKind::Survey => self.survey.len(),
        }) as u64
    }

    /// All videos ordered by ordinal.
    pub fn videos(&self) -> Vec<&Video> {
        let mut v: Vec<&Video> = self.videos.iter().map(|s| &s.value).collect();
        v.sort_by_key(|v| v.ordinal);
        v
    }

    pub fn video(&self, id: &VideoId) -> Option<&Video> {
        self.video_index.get(id).map(|&i| &self.videos[i].value)
    }

    pub fn require_video(&self, id: &VideoId) -> Result<&Video, StoreError> {
        self.video(id)
            .ok_or_else(|| StoreError::UnknownVideo(id.clone()))
    }

    /// All accounts ordered by login id.
    pub fn accounts(&self) -> Vec<&UserAccount> {
        let mut a: Vec<&UserAccount> = self.accounts.iter().map(|s| &s.value).collect();
        a.sort_by(|x, y| x.login_id.cmp(&y.login_id));
        a
    }

    pub fn account(&self, id: &LoginId) -> Option<&UserAccount> {
        self.account_index.get(id).map(|&i| &self.accounts[i].value)
    }

    pub fn response(&self, id: &ResponseId) -> Option<&Stored<Response>> {
        self.response_index.get(id).map(|&i| &self.responses[i])
    }

    pub fn response_count(&self) -> usize {
        self.responses.len()
    }

    /// Responses of a video in append order.
    pub fn video_responses(&self, video_id: &VideoId) -> Result<Vec<&Response>, StoreError> {
        self.require_video(video_id)?;
        Ok(self
            .responses_by_video
            .get(video_id)
            .map(|ix| ix.iter().map(|&i| &self.responses[i].value).collect())
            .unwrap_or_default())
    }

    /// Play segments of a video in append order.
    pub fn video_segments(&self, video_id: &VideoId) -> Result<Vec<&PlaySegment>, StoreError> {
        self.require_video(video_id)?;
        Ok(self
            .segments_by_video
            .get(video_id)
            .map(|ix| ix.iter().map(|&i| &self.segments[i].value).collect())
            .unwrap_or_default())
    }

    pub fn survey(&self) -> impl Iterator<Item = &SurveyDatum> {
        self.survey.iter().map(|s| &s.value)
    }

    /// Responses of one video, optionally filtered, sorted by position with
    /// ties broken by `created_at` and then `response_id`.
    pub fn query_responses(&self, q: &ResponseQuery) -> Result<Vec<Response>, StoreError> {
        let mut out: Vec<Response> = self
            .video_responses(&q.video_id)?
            .into_iter()
            .filter(|r| q.student_id.as_ref().is_none_or(|s| &r.student_id == s))
            .filter(|r| q.rtype.is_none_or(|t| r.rtype == t))
            .cloned()
            .collect();
        sort_responses(&mut out);
        Ok(out)
    }

    fn check<R: Record>(&self, record: &R) -> Result<Admission, StoreError> {
        record.admit(self)
    }

    fn push<R: Record>(&mut self, stored: Stored<R>) {
        R::push(self, stored)
    }
}

/// Canonical response order: position, then `created_at`, then `response_id`.
pub fn sort_responses(responses: &mut [Response]) {
    responses.sort_by(|a, b| {
        a.position_s
            .total_cmp(&b.position_s)
            .then_with(|| a.created_at.cmp(&b.created_at))
            .then_with(|| a.response_id.cmp(&b.response_id))
    });
}

enum Admission {
    New,
    Existing(u64),
}

/// A kind of record that can live in the store.
trait Record: Serialize + DeserializeOwned + Clone {
    const KIND: RecordKind;

    fn identity(&self) -> String;

    fn admit(&self, state: &State) -> Result<Admission, StoreError>;

    fn push(state: &mut State, stored: Stored<Self>);

    fn invalid(&self, source: ValidationError) -> StoreError {
        StoreError::Invalid {
            kind: Self::KIND,
            identity: self.identity(),
            source,
        }
    }
}

impl Record for Video {
    const KIND: RecordKind = RecordKind::Video;

    fn identity(&self) -> String {
        format!("video_id={}", self.video_id)
    }

    fn admit(&self, state: &State) -> Result<Admission, StoreError> {
        self.validate().map_err(|e| self.invalid(e))?;
        if state.video_index.contains_key(&self.video_id) {
            return Err(StoreError::DuplicateVideo(self.video_id.clone()));
        }
        if state.ordinals.contains_key(&self.ordinal) {
            return Err(StoreError::DuplicateOrdinal(self.ordinal));
        }
        Ok(Admission::New)
    }

    fn push(state: &mut State, stored: Stored<Self>) {
        state
            .video_index
            .insert(stored.value.video_id.clone(), state.videos.len());
        state
            .ordinals
            .insert(stored.value.ordinal, stored.value.video_id.clone());
        state.videos.push(stored);
    }
}

impl Record for UserAccount {
    const KIND: RecordKind = RecordKind::Account;

    fn identity(&self) -> String {
        format!("login_id={}", self.login_id)
    }

    fn admit(&self, state: &State) -> Result<Admission, StoreError> {
        self.validate().map_err(|e| self.invalid(e))?;
        if state.account_index.contains_key(&self.login_id) {
            return Err(StoreError::DuplicateAccount(self.login_id.clone()));
        }
        Ok(Admission::New)
    }

    fn push(state: &mut State, stored: Stored<Self>) {
        state
            .account_index
            .insert(stored.value.login_id.clone(), state.accounts.len());
        state.accounts.push(stored);
    }
}

impl Record for Response {
    const KIND: RecordKind = RecordKind::Response;

    fn identity(&self) -> String {
        format!("response_id={}", self.response_id)
    }

    fn admit(&self, state: &State) -> Result<Admission, StoreError> {
        if let Some(existing) = state.response(&self.response_id) {
            return Ok(Admission::Existing(existing.seq));
        }
        let video = state.require_video(&self.video_id)?;
        if state.account(&self.student_id).is_none() {
            return Err(StoreError::UnknownStudent(self.student_id.clone()));
        }
        self.validate(video).map_err(|e| self.invalid(e))?;
        Ok(Admission::New)
    }

    fn push(state: &mut State, stored: Stored<Self>) {
        let i = state.responses.len();
        state
            .response_index
            .insert(stored.value.response_id.clone(), i);
        state
            .responses_by_video
            .entry(stored.value.video_id.clone())
            .or_default()
            .push(i);
        state.responses.push(stored);
    }
}

impl Record for PlaySegment {
    const KIND: RecordKind = RecordKind::PlaySegment;

    fn identity(&self) -> String {
        format!(
            "student_id={} video_id={} [{}, {}]",
            self.student_id, self.video_id, self.start_pos_s, self.end_pos_s
        )
    }

    fn admit(&self, state: &State) -> Result<Admission, StoreError> {
        let video = state.require_video(&self.video_id)?;
        if state.account(&self.student_id).is_none() {
            return Err(StoreError::UnknownStudent(self.student_id.clone()));
        }
        self.validate(video).map_err(|e| self.invalid(e))?;
        Ok(Admission::New)
    }

    fn push(state: &mut State, stored: Stored<Self>) {
        let i = state.segments.len();
        state
            .segments_by_video
            .entry(stored.value.video_id.clone())
            .or_default()
            .push(i);
        state.segments.push(stored);
    }
}

impl Record for SurveyDatum {
    const KIND: RecordKind = RecordKind::Survey;

    fn identity(&self) -> String {
        format!(
            "question_id={} respondent_id={}",
            self.question_id, self.respondent_id
        )
    }

    fn admit(&self, state: &State) -> Result<Admission, StoreError> {
        self.validate().map_err(|e| self.invalid(e))?;
        let key = (self.question_id.clone(), self.respondent_id.clone());
        if state.survey_index.contains_key(&key) {
            return Err(StoreError::DuplicateSurveyAnswer {
                question_id: key.0,
                respondent_id: key.1,
            });
        }
        Ok(Admission::New)
    }

    fn push(state: &mut State, stored: Stored<Self>) {
        let key = (
            stored.value.question_id.clone(),
            stored.value.respondent_id.clone(),
        );
        state.survey_index.insert(key, state.survey.len());
        state.survey.push(stored);
    }
}

fn encode_line<R: Serialize>(stored: &Stored<R>) -> String {
    let mut map = match serde_json::to_value(&stored.value) {
        Ok(Value::Object(map)) => map,
        _ => unreachable!("domain records serialize to JSON objects"),
    };
    map.insert("seq".into(), stored.seq.into());
    map.insert(
        "appended_at".into(),
        stored
            .appended_at
            .to_rfc3339_opts(SecondsFormat::AutoSi, true)
            .into(),
    );
    map.insert("format_version".into(), FORMAT_VERSION.into());
    serde_json::to_string(&map).expect("JSON map serializes")
}

struct DecodedLine<R> {
    seq: Option<u64>,
    appended_at: Option<DateTime<Utc>>,
    value: R,
}

fn decode_line<R: DeserializeOwned>(
    line_no: usize,
    text: &str,
) -> Result<DecodedLine<R>, LineError> {
    let err = |field: Option<&str>, message: String| LineError {
        line: line_no,
        field: field.map(str::to_owned),
        message,
    };
    let mut map: Map<String, Value> = match serde_json::from_str(text) {
        Ok(Value::Object(map)) => map,
        Ok(_) => return Err(err(None, "expected a JSON object".into())),
        Err(e) => return Err(err(None, e.to_string())),
    };
    let [seq, appended_at, version] = META_FIELDS.map(|f| map.remove(f));
    if let Some(v) = version {
        if v.as_u64() != Some(FORMAT_VERSION) {
            return Err(err(
                Some("format_version"),
                format!("unsupported format_version {v}"),
            ));
        }
    }
    let seq = match seq {
        None => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| {
            err(
                Some("seq"),
                format!("expected a non-negative integer, got {v}"),
            )
        })?),
    };
    let appended_at = match appended_at {
        None => None,
        Some(Value::String(s)) => Some(
            DateTime::parse_from_rfc3339(&s)
                .map_err(|e| err(Some("appended_at"), e.to_string()))?
                .with_timezone(&Utc),
        ),
        Some(v) => {
            return Err(err(
                Some("appended_at"),
                format!("expected RFC 3339 string, got {v}"),
            ))
        }
    };
    let value = serde_path_to_error::deserialize(Value::Object(map)).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        LineError {
            line: line_no,
            field,
            message: e.into_inner().to_string(),
        }
    })?;
    Ok(DecodedLine {
        seq,
        appended_at,
        value,
    })
}

/// Lines of a JSONL stream, 1-based, blank lines skipped.
fn numbered_lines(reader: impl BufRead) -> impl Iterator<Item = io::Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

struct LogFiles {
    dir: PathBuf,
    responses: File,
    segments: BufWriter<File>,
    segments_dirty: bool,
    last_segment_flush: Instant,
    accounts: File,
    videos: File,
    survey: File,
}

impl LogFiles {
    fn open(dir: &Path) -> io::Result<Self> {
        let open = |kind: RecordKind| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join(kind.file_name()))
        };
        Ok(Self {
            dir: dir.to_owned(),
            responses: open(RecordKind::Response)?,
            segments: BufWriter::new(open(RecordKind::PlaySegment)?),
            segments_dirty: false,
            last_segment_flush: Instant::now(),
            accounts: open(RecordKind::Account)?,
            videos: open(RecordKind::Video)?,
            survey: open(RecordKind::Survey)?,
        })
    }

    /// Writes lines for one kind. Everything but play segments is synced
    /// before returning.
    fn write(&mut self, kind: RecordKind, lines: &[String]) -> io::Result<()> {
        let mut buf = String::new();
        for l in lines {
            buf.push_str(l);
            buf.push('\n');
        }
        let file = match kind {
            RecordKind::PlaySegment => {
                self.segments.write_all(buf.as_bytes())?;
                self.segments_dirty = true;
                if self.last_segment_flush.elapsed() >= SEGMENT_FLUSH_INTERVAL {
                    self.flush_segments()?;
                }
                return Ok(());
            }
            RecordKind::Response => &mut self.responses,
            RecordKind::Account => &mut self.accounts,
            RecordKind::Video => &mut self.videos,
            RecordKind::Survey => &mut self.survey,
        };
        file.write_all(buf.as_bytes())?;
        file.sync_data()
    }

    fn flush_segments(&mut self) -> io::Result<()> {
        if self.segments_dirty {
            self.segments.flush()?;
            self.segments.get_ref().sync_data()?;
            self.segments_dirty = false;
        }
        self.last_segment_flush = Instant::now();
        Ok(())
    }
}

impl Drop for LogFiles {
    fn drop(&mut self) {
        let _ = self.flush_segments();
    }
}

/// The append-only store. Cheap to share behind an `Arc`.
pub struct Store {
    state: RwLock<Snapshot>,
    writer: Mutex<Option<LogFiles>>,
    options: StoreOptions,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store")
            .field("dir", &self.data_dir())
            .finish_non_exhaustive()
    }
}

impl Store {
    /// A store with no backing files.
    pub fn in_memory() -> Self {
        Self::in_memory_with(StoreOptions::default())
    }

    pub fn in_memory_with(options: StoreOptions) -> Self {
        Self {
            state: RwLock::new(Arc::new(State::default())),
            writer: Mutex::new(None),
            options,
        }
    }

    /// Opens (creating if needed) the data directory and replays its logs.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(dir, StoreOptions::default())
    }

    pub fn open_with(dir: impl AsRef<Path>, options: StoreOptions) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut state = State::default();
        replay::<Video>(dir, &mut state)?;
        replay::<UserAccount>(dir, &mut state)?;
        replay::<Response>(dir, &mut state)?;
        replay::<PlaySegment>(dir, &mut state)?;
        replay::<SurveyDatum>(dir, &mut state)?;
        Ok(Self {
            state: RwLock::new(Arc::new(state)),
            writer: Mutex::new(Some(LogFiles::open(dir)?)),
            options,
        })
    }

    pub fn data_dir(&self) -> Option<PathBuf> {
        self.writer
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .as_ref()
            .map(|f| f.dir.clone())
    }

    /// Current consistent view. Later appends are never visible through it.
    pub fn snapshot(&self) -> Snapshot {
        Arc::clone(&self.state.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn add_video(&self, video: Video) -> Result<u64, StoreError> {
        self.append_one(video).map(|a| a.seq)
    }

    pub fn add_account(&self, account: UserAccount) -> Result<u64, StoreError> {
        self.append_one(account).map(|a| a.seq)
    }

    /// Durable before returning. A second append with the same `response_id`
    /// returns the original sequence number and stores nothing.
    pub fn append_response(&self, response: Response) -> Result<Appended, StoreError> {
        self.append_one(response)
    }

    pub fn append_play_segment(&self, segment: PlaySegment) -> Result<u64, StoreError> {
        self.append_one(segment).map(|a| a.seq)
    }

    /// Appends a batch atomically: either every segment is stored or none is.
    /// Durable within [`SEGMENT_FLUSH_INTERVAL`].
    pub fn append_play_segments(&self, segments: Vec<PlaySegment>) -> Result<Vec<u64>, StoreError> {
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.snapshot();
        for (index, s) in segments.iter().enumerate() {
            current.check(s).map_err(|e| match e {
                StoreError::Invalid { source, .. } => StoreError::InvalidSegment { index, source },
                other => other,
            })?;
        }
        let now = (self.options.clock)();
        let first = current.seq(RecordKind::PlaySegment) + 1;
        let stored: Vec<Stored<PlaySegment>> = segments
            .into_iter()
            .enumerate()
            .map(|(i, value)| Stored {
                seq: first + i as u64,
                appended_at: now,
                value,
            })
            .collect();
        if let Some(files) = writer.as_mut() {
            let lines: Vec<String> = stored.iter().map(encode_line).collect();
            files.write(RecordKind::PlaySegment, &lines)?;
        }
        let seqs = stored.iter().map(|s| s.seq).collect();
        drop(current);
        self.publish(|state| stored.into_iter().for_each(|s| state.push(s)));
        Ok(seqs)
    }

    pub fn append_survey(&self, datum: SurveyDatum) -> Result<u64, StoreError> {
        self.append_one(datum).map(|a| a.seq)
    }

    /// Flushes buffered play segments to disk.
    pub fn flush(&self) -> Result<(), StoreError> {
        if let Some(files) = self
            .writer
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .as_mut()
        {
            files.flush_segments()?;
        }
        Ok(())
    }

    /// Flushes play segments only if the flush interval has elapsed.
    pub fn flush_if_due(&self) -> Result<(), StoreError> {
        if let Some(files) = self
            .writer
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .as_mut()
        {
            if files.last_segment_flush.elapsed() >= SEGMENT_FLUSH_INTERVAL {
                files.flush_segments()?;
            }
        }
        Ok(())
    }

    /// Convenience for [`State::query_responses`] on a fresh snapshot.
    pub fn query_responses(&self, q: &ResponseQuery) -> Result<Vec<Response>, StoreError> {
        self.snapshot().query_responses(q)
    }

    fn append_one<R: Record>(&self, record: R) -> Result<Appended, StoreError> {
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.snapshot();
        if let Admission::Existing(seq) = current.check(&record)? {
            return Ok(Appended {
                seq,
                created: false,
            });
        }
        let stored = Stored {
            seq: current.seq(R::KIND) + 1,
            appended_at: (self.options.clock)(),
            value: record,
        };
        if let Some(files) = writer.as_mut() {
            files.write(R::KIND, &[encode_line(&stored)])?;
        }
        let seq = stored.seq;
        // Holding `current` would force publish to clone the whole index.
        drop(current);
        self.publish(|state| state.push(stored));
        Ok(Appended { seq, created: true })
    }

    /// Applies a mutation to the shared index. Outstanding snapshots keep
    /// their copy; the index is cloned only if one is alive.
    fn publish(&self, mutate: impl FnOnce(&mut State)) {
        let mut guard = self.state.write().unwrap_or_else(|e| e.into_inner());
        mutate(Arc::make_mut(&mut guard));
    }

    /// Writes every record of `kind` as JSONL in log order.
    pub fn export_jsonl(
        &self,
        kind: RecordKind,
        opts: ExportOptions,
        out: &mut impl Write,
    ) -> io::Result<usize> {
        let snap = self.snapshot();
        let lines: Vec<String> = match kind {
            RecordKind::Response => snap.responses.iter().map(encode_line).collect(),
            RecordKind::PlaySegment => snap.segments.iter().map(encode_line).collect(),
            RecordKind::Video => snap.videos.iter().map(encode_line).collect(),
            RecordKind::Survey => snap.survey.iter().map(encode_line).collect(),
            RecordKind::Account => snap
                .accounts
                .iter()
                .map(|s| {
                    if opts.include_password_hashes {
                        encode_line(s)
                    } else {
                        let mut redacted = s.clone();
                        redacted.value.password_hash = None;
                        encode_line(&redacted)
                    }
                })
                .collect(),
        };
        for l in &lines {
            out.write_all(l.as_bytes())?;
            out.write_all(b"\n")?;
        }
        Ok(lines.len())
    }

    /// [`Store::export_jsonl`] into a byte vector.
    pub fn export_bytes(&self, kind: RecordKind, opts: ExportOptions) -> Vec<u8> {
        let mut buf = Vec::new();
        self.export_jsonl(kind, opts, &mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    /// Loads JSONL records of `kind`, assigning fresh sequence numbers.
    ///
    /// All-or-nothing: if any line fails to parse or violates an invariant,
    /// every offending line is reported and nothing is stored. Responses whose
    /// id is already present are skipped. Returns the number of records stored.
    pub fn import_jsonl(
        &self,
        kind: RecordKind,
        input: impl BufRead,
    ) -> Result<usize, ImportError> {
        match kind {
            RecordKind::Response => self.import::<Response>(input),
            RecordKind::PlaySegment => self.import::<PlaySegment>(input),
            RecordKind::Account => self.import::<UserAccount>(input),
            RecordKind::Video => self.import::<Video>(input),
            RecordKind::Survey => self.import::<SurveyDatum>(input),
        }
    }

    fn import<R: Record>(&self, input: impl BufRead) -> Result<usize, ImportError> {
        let mut parsed = Vec::new();
        let mut errors = Vec::new();
        for item in numbered_lines(input) {
            let (line_no, text) = item?;
            match decode_line::<R>(line_no, &text) {
                Ok(d) => parsed.push((line_no, d.value)),
                Err(e) => errors.push(e),
            }
        }

        // Lines that parsed are still checked so one pass reports everything.
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next: State = (*self.snapshot()).clone();
        let now = (self.options.clock)();
        let mut stored_lines = Vec::new();
        for (line_no, value) in parsed {
            match next.check(&value) {
                Ok(Admission::Existing(_)) => {}
                Ok(Admission::New) => {
                    let stored = Stored {
                        seq: next.seq(R::KIND) + 1,
                        appended_at: now,
                        value,
                    };
                    stored_lines.push(encode_line(&stored));
                    next.push(stored);
                }
                Err(e) => errors.push(LineError {
                    line: line_no,
                    field: match &e {
                        StoreError::Invalid { source, .. } => Some(source.field().to_owned()),
                        _ => None,
                    },
                    message: e.to_string(),
                }),
            }
        }
        if !errors.is_empty() {
            errors.sort_by_key(|e| e.line);
            return Err(ImportError::Lines(errors));
        }
        if let Some(files) = writer.as_mut() {
            files.write(R::KIND, &stored_lines)?;
            if R::KIND == RecordKind::PlaySegment {
                files.flush_segments()?;
            }
        }
        *self.state.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
        Ok(stored_lines.len())
    }
}

/// Replays one log into `state`. A trailing line without a newline that
/// fails to parse is a torn write and is truncated away.
fn replay<R: Record>(dir: &Path, state: &mut State) -> Result<(), StoreError> {
    let path = dir.join(R::KIND.file_name());
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e.into()),
    };
    let corrupt = |error: LineError| StoreError::Corrupt {
        path: path.clone(),
        error,
    };
    let complete_len = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut tail_torn = false;
    let mut offset = 0;
    for (i, raw) in bytes.split_inclusive(|&b| b == b'\n').enumerate() {
        let line_no = i + 1;
        let is_tail = offset >= complete_len;
        offset += raw.len();
        let text = match std::str::from_utf8(raw) {
            Ok(t) => t.trim(),
            Err(_) if is_tail => {
                tail_torn = true;
                break;
            }
            Err(e) => {
                return Err(corrupt(LineError {
                    line: line_no,
                    field: None,
                    message: e.to_string(),
                }))
            }
        };
        if text.is_empty() {
            continue;
        }
        let decoded = match decode_line::<R>(line_no, text) {
            Ok(d) => d,
            Err(_) if is_tail => {
                tail_torn = true;
                break;
            }
            Err(e) => return Err(corrupt(e)),
        };
        let expected = state.seq(R::KIND) + 1;
        if decoded.seq != Some(expected) {
            return Err(corrupt(LineError {
                line: line_no,
                field: Some("seq".into()),
                message: format!("expected seq {expected}, found {:?}", decoded.seq),
            }));
        }
        match state.check(&decoded.value) {
            Ok(Admission::New) => {}
            Ok(Admission::Existing(_)) => {
                return Err(corrupt(LineError {
                    line: line_no,
                    field: None,
                    message: format!("duplicate {}", decoded.value.identity()),
                }))
            }
            Err(e) => {
                return Err(corrupt(LineError {
                    line: line_no,
                    field: None,
                    message: e.to_string(),
                }))
            }
        }
        state.push(Stored {
            seq: expected,
            appended_at: decoded.appended_at.unwrap_or(DateTime::UNIX_EPOCH),
            value: decoded.value,
        });
    }
    if tail_torn {
        OpenOptions::new()
            .write(true)
            .open(&path)?
            .set_len(complete_len as u64)?;
    }
    Ok(())
}
