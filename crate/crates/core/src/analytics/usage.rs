//! Per-video usage statistics: who played, who responded, how much.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;

use serde::Serialize;

use crate::domain::{LoginId, ResponseType, VideoId};
use crate::store::{State, StoreError};

/// Seconds of content a student must have watched to count as a player.
pub const DEFAULT_PLAY_THRESHOLD_S: f64 = 1.0;

/// Slack for rounding in summed segment lengths: (0.1 - 0.0) + (1.2 - 0.3) is
/// 0.9999999999999999 in f64.
const WATCHED_SLACK_S: f64 = 1e-9;

pub const USAGE_CSV_HEADER: [&str; 13] = [
    "video_id",
    "title",
    "length_s",
    "played",
    "responded",
    "interesting",
    "important",
    "difficult",
    "question",
    "sum",
    "avg",
    "std",
    "normalized_per_10min",
];

#[derive(Debug, thiserror::Error)]
pub enum UsageError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("play threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("video {0} has no qualifying players")]
    NoPlayers(VideoId),
}

/// Students whose summed watched duration of the video reaches `threshold_s`.
pub fn played_students(
    snapshot: &State,
    video_id: &VideoId,
    threshold_s: f64,
) -> Result<BTreeSet<LoginId>, UsageError> {
    if !(threshold_s.is_finite() && threshold_s > 0.0) {
        return Err(UsageError::BadThreshold(threshold_s));
    }
    let mut watched: HashMap<&LoginId, f64> = HashMap::new();
    for s in snapshot.video_segments(video_id)? {
        *watched.entry(&s.student_id).or_default() += s.watched_s();
    }
    Ok(watched
        .into_iter()
        .filter(|&(_, total)| total + WATCHED_SLACK_S >= threshold_s)
        .map(|(id, _)| id.clone())
        .collect())
}

/// One row of the usage table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsageStats {
    pub video_id: VideoId,
    pub title: String,
    pub length_s: f64,
    pub played: usize,
    pub responded: usize,
    pub per_type: BTreeMap<ResponseType, u64>,
    pub sum: u64,
    /// Responses per player. Absent when nobody played.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg: Option<f64>,
    /// Sample standard deviation of per-player response counts, players with
    /// no responses counting as 0. Absent with fewer than two players.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    /// `avg` per 10 minutes of video.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_per_10min: Option<f64>,
}

impl UsageStats {
    pub fn count(&self, rtype: ResponseType) -> u64 {
        self.per_type.get(&rtype).copied().unwrap_or(0)
    }
}

pub fn usage_stats(snapshot: &State, video_id: &VideoId) -> Result<UsageStats, UsageError> {
    usage_stats_with_threshold(snapshot, video_id, DEFAULT_PLAY_THRESHOLD_S)
}

pub fn usage_stats_with_threshold(
    snapshot: &State,
    video_id: &VideoId,
    threshold_s: f64,
) -> Result<UsageStats, UsageError> {
    let video = snapshot.require_video(video_id)?;
    let players = played_students(snapshot, video_id, threshold_s)?;
    let responses = snapshot.video_responses(video_id)?;

    let mut per_type: BTreeMap<ResponseType, u64> =
        ResponseType::ALL.into_iter().map(|t| (t, 0)).collect();
    let mut per_student: HashMap<&LoginId, u64> = HashMap::new();
    for r in &responses {
        *per_type.entry(r.rtype).or_default() += 1;
        *per_student.entry(&r.student_id).or_default() += 1;
    }
    let sum = responses.len() as u64;
    let played = players.len();

    let avg = (played > 0).then(|| sum as f64 / played as f64);
    let std = (played > 1).then(|| {
        let counts: Vec<f64> = players
            .iter()
            .map(|p| per_student.get(p).copied().unwrap_or(0) as f64)
            .collect();
        sample_std(&counts)
    });
    let normalized_per_10min = avg.map(|a| a / (video.duration_s / 600.0));

    Ok(UsageStats {
        video_id: video.video_id.clone(),
        title: video.title.clone(),
        length_s: video.duration_s,
        played,
        responded: per_student.len(),
        per_type,
        sum,
        avg,
        std,
        normalized_per_10min,
    })
}

/// Usage rows for every video, in catalog order.
pub fn usage_table(snapshot: &State) -> Result<Vec<UsageStats>, UsageError> {
    snapshot
        .videos()
        .into_iter()
        .map(|v| usage_stats(snapshot, &v.video_id))
        .collect()
}

/// Responses per player per 10 minutes of video.
pub fn normalized_avg(snapshot: &State, video_id: &VideoId) -> Result<f64, UsageError> {
    usage_stats(snapshot, video_id)?
        .normalized_per_10min
        .ok_or_else(|| UsageError::NoPlayers(video_id.clone()))
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Writes usage rows as CSV with [`USAGE_CSV_HEADER`]. Absent values are
/// empty fields.
pub fn write_usage_csv<'a>(
    rows: impl IntoIterator<Item = &'a UsageStats>,
    out: impl io::Write,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(USAGE_CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in rows {
        w.write_record([
            s.video_id.to_string(),
            s.title.clone(),
            s.length_s.to_string(),
            s.played.to_string(),
            s.responded.to_string(),
            s.count(ResponseType::Interesting).to_string(),
            s.count(ResponseType::Important).to_string(),
            s.count(ResponseType::Difficult).to_string(),
            s.count(ResponseType::Question).to_string(),
            s.sum.to_string(),
            opt(s.avg),
            opt(s.std),
            opt(s.normalized_per_10min),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{PlaySegment, Response, Role, UserAccount, Video};
    use crate::store::Store;
    use chrono::DateTime;

    fn store_with(duration_s: f64, students: &[&str]) -> Store {
        let store = Store::in_memory();
        store
            .add_video(Video {
                video_id: "v".into(),
                title: "T".into(),
                duration_s,
                source_uri: "/v.mp4".into(),
                lecture_label: String::new(),
                ordinal: 1,
            })
            .unwrap();
        for s in students {
            store
                .add_account(UserAccount {
                    login_id: (*s).into(),
                    password_hash: None,
                    role: Role::Student,
                    display_name: s.to_string(),
                })
                .unwrap();
        }
        store
    }

    fn watch(store: &Store, student: &str, start: f64, end: f64) {
        store
            .append_play_segment(PlaySegment {
                student_id: student.into(),
                video_id: "v".into(),
                start_pos_s: start,
                end_pos_s: end,
                playback_rate: 1.5,
                recorded_at: DateTime::UNIX_EPOCH,
            })
            .unwrap();
    }

    fn respond(store: &Store, id: &str, student: &str, rtype: ResponseType) {
        store
            .append_response(Response {
                response_id: id.into(),
                student_id: student.into(),
                video_id: "v".into(),
                position_s: 1.0,
                rtype,
                text: (rtype == ResponseType::Question).then(|| "?".to_owned()),
                created_at: DateTime::UNIX_EPOCH,
            })
            .unwrap();
    }

    #[test]
    fn play_threshold_sums_segments() {
        let store = store_with(600.0, &["short", "split", "tenths", "none"]);
        watch(&store, "short", 10.0, 10.8);
        watch(&store, "tenths", 0.0, 0.1);
        watch(&store, "tenths", 0.3, 1.2);
        watch(&store, "split", 0.0, 0.6);
        watch(&store, "split", 30.0, 30.6);
        let played = played_students(&store.snapshot(), &"v".into(), 1.0).unwrap();
        assert_eq!(
            played.into_iter().collect::<Vec<_>>(),
            [LoginId::from("split"), LoginId::from("tenths")]
        );
    }

    #[test]
    fn no_play_data_means_nobody_played() {
        let store = store_with(600.0, &["a"]);
        assert!(played_students(&store.snapshot(), &"v".into(), 1.0)
            .unwrap()
            .is_empty());
        let s = usage_stats(&store.snapshot(), &"v".into()).unwrap();
        assert_eq!(
            (s.played, s.avg, s.std, s.normalized_per_10min),
            (0, None, None, None)
        );
        assert!(matches!(
            normalized_avg(&store.snapshot(), &"v".into()),
            Err(UsageError::NoPlayers(_))
        ));
        assert!(matches!(
            played_students(&store.snapshot(), &"v".into(), 0.0),
            Err(UsageError::BadThreshold(_))
        ));
        assert!(matches!(
            usage_stats(&store.snapshot(), &"nope".into()),
            Err(UsageError::Store(StoreError::UnknownVideo(_)))
        ));
    }

    #[test]
    fn unit_case() {
        let store = store_with(600.0, &["a"]);
        watch(&store, "a", 0.0, 600.0);
        respond(&store, "r", "a", ResponseType::Interesting);
        let s = usage_stats(&store.snapshot(), &"v".into()).unwrap();
        assert_eq!(
            (s.sum, s.avg, s.normalized_per_10min),
            (1, Some(1.0), Some(1.0))
        );
        assert_eq!(s.std, None);
        assert_eq!(normalized_avg(&store.snapshot(), &"v".into()).unwrap(), 1.0);
    }

    #[test]
    fn std_counts_silent_players_as_zero() {
        let store = store_with(300.0, &["a", "b", "c"]);
        for s in ["a", "b", "c"] {
            watch(&store, s, 0.0, 300.0);
        }
        respond(&store, "1", "a", ResponseType::Important);
        respond(&store, "2", "a", ResponseType::Question);
        respond(&store, "3", "a", ResponseType::Difficult);
        respond(&store, "4", "b", ResponseType::Important);
        let s = usage_stats(&store.snapshot(), &"v".into()).unwrap();
        // counts (3, 1, 0): mean 4/3, sample variance ((5/3)^2 + (1/3)^2 + (4/3)^2) / 2 = 7/3
        assert_eq!(s.played, 3);
        assert_eq!(s.responded, 2);
        assert_eq!(s.sum, 4);
        assert_eq!(s.count(ResponseType::Important), 2);
        assert!((s.avg.unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert!((s.std.unwrap() - (7.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((s.normalized_per_10min.unwrap() - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn csv_header_and_empty_fields() {
        let store = store_with(600.0, &[]);
        let rows = usage_table(&store.snapshot()).unwrap();
        let mut out = Vec::new();
        write_usage_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "video_id,title,length_s,played,responded,interesting,important,difficult,question,sum,avg,std,normalized_per_10min"
        );
        assert_eq!(lines.next().unwrap(), "v,T,600,0,0,0,0,0,0,0,,,");
    }
}
