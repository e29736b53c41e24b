//! A ten-video classroom course used as a reference fixture.
//!
//! [`COURSE`] holds the published per-video usage summary (players,
//! responders, per-type totals, average and standard deviation).
//! [`populate`] synthesizes a store whose raw records reproduce every count
//! exactly: 42 students, the first `played` of them watch the whole video,
//! the first `responded` players respond, and per-student totals are spread
//! so the sample standard deviation lands near the published one.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    LoginId, PlaySegment, Response, ResponseType, Role, UserAccount, Video, VideoId,
};
use crate::store::{Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CourseVideo {
    pub ordinal: u32,
    pub lecture: &'static str,
    pub method: &'static str,
    pub title: &'static str,
    pub length_s: u32,
    pub played: usize,
    pub responded: usize,
    pub interesting: usize,
    pub important: usize,
    pub difficult: usize,
    pub question: usize,
    pub sum: usize,
    /// Published responses per player, one decimal.
    pub avg: f64,
    /// Published standard deviation, one decimal.
    pub std: f64,
}

impl CourseVideo {
    pub fn video_id(&self) -> VideoId {
        VideoId::new(format!("v{:02}", self.ordinal))
    }

    pub fn count(&self, rtype: ResponseType) -> usize {
        match rtype {
            ResponseType::Interesting => self.interesting,
            ResponseType::Important => self.important,
            ResponseType::Difficult => self.difficult,
            ResponseType::Question => self.question,
        }
    }

    pub fn uses_response_collector(&self) -> bool {
        self.ordinal >= 3
    }
}

const fn mmss(m: u32, s: u32) -> u32 {
    m * 60 + s
}

macro_rules! row {
    ($o:expr, $lec:expr, $meth:expr, $title:expr, $len:expr, $pl:expr, $re:expr,
     $i:expr, $im:expr, $d:expr, $q:expr, $sum:expr, $avg:expr, $std:expr) => {
        CourseVideo {
            ordinal: $o,
            lecture: $lec,
            method: $meth,
            title: $title,
            length_s: $len,
            played: $pl,
            responded: $re,
            interesting: $i,
            important: $im,
            difficult: $d,
            question: $q,
            sum: $sum,
            avg: $avg,
            std: $std,
        }
    };
}

const RC: &str = "Response Collector";

pub const COURSE: [CourseVideo; 10] = [
    row!(
        1,
        "I",
        "Pen & Paper",
        "Introduction to Git",
        mmss(22, 42),
        42,
        34,
        46,
        51,
        10,
        20,
        127,
        3.0,
        3.0
    ),
    row!(
        2,
        "I",
        "Google Spreadsheet",
        "Git with GitHub",
        mmss(15, 27),
        42,
        36,
        43,
        22,
        2,
        5,
        72,
        1.7,
        1.4
    ),
    row!(
        3,
        "II",
        RC,
        "Interface Specification and Prototyping",
        mmss(11, 57),
        42,
        40,
        101,
        47,
        8,
        4,
        160,
        3.8,
        2.2
    ),
    row!(
        4,
        "III",
        RC,
        "Software Test",
        mmss(12, 32),
        41,
        38,
        86,
        71,
        5,
        5,
        167,
        4.1,
        2.9
    ),
    row!(
        5,
        "IV",
        RC,
        "Pair Programming",
        mmss(11, 7),
        42,
        36,
        69,
        86,
        3,
        0,
        158,
        3.8,
        3.4
    ),
    row!(
        6,
        "IV",
        RC,
        "Suffix Array",
        mmss(6, 21),
        42,
        33,
        47,
        22,
        9,
        2,
        80,
        1.9,
        1.6
    ),
    row!(
        7,
        "V",
        RC,
        "Refactoring",
        mmss(9, 47),
        41,
        34,
        69,
        50,
        1,
        0,
        120,
        2.9,
        2.5
    ),
    row!(
        8,
        "V",
        RC,
        "Dynamic Programming",
        mmss(13, 49),
        42,
        33,
        66,
        49,
        28,
        0,
        143,
        3.4,
        3.4
    ),
    row!(
        9,
        "VI",
        RC,
        "Code Reading",
        mmss(7, 33),
        34,
        23,
        61,
        12,
        0,
        0,
        73,
        2.1,
        2.3
    ),
    row!(
        10,
        "VI",
        RC,
        "About Inheritance",
        mmss(12, 47),
        35,
        24,
        64,
        39,
        5,
        0,
        108,
        3.1,
        3.9
    ),
];

pub const STUDENTS: usize = 42;

pub fn student_id(i: usize) -> LoginId {
    LoginId::new(format!("s{:02}", i + 1))
}

/// Per-student response totals: `responded` students with at least one
/// response, `played - responded` with none, summing to `sum`, with a sum of
/// squares driven towards the published standard deviation.
pub fn per_student_totals(v: &CourseVideo) -> Vec<usize> {
    let mut counts = vec![0usize; v.played];
    let r = v.responded.max(1).min(v.played);
    for (i, c) in counts.iter_mut().take(r).enumerate() {
        *c = v.sum / r + usize::from(i < v.sum % r);
    }
    let n = v.played as f64;
    let target = v.std * v.std * (n - 1.0) + (v.sum as f64).powi(2) / n;
    let mut squares: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    loop {
        let gap = target - squares;
        // Moving one unit from a donor with count a to a receiver with count
        // b >= a raises the sum of squares by 2(b - a) + 2.
        let Some(donor) = (0..r).filter(|&i| counts[i] > 1).min_by_key(|&i| counts[i]) else {
            break;
        };
        let a = counts[donor];
        let receiver = (0..r)
            .filter(|&i| i != donor && counts[i] >= a)
            .filter(|&i| (2 * (counts[i] - a) + 2) as f64 <= gap)
            .max_by_key(|&i| counts[i]);
        let Some(receiver) = receiver else { break };
        squares += (2 * (counts[receiver] - a) + 2) as f64;
        counts[donor] -= 1;
        counts[receiver] += 1;
    }
    counts
}

fn base_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2018, 4, 10, 9, 0, 0).unwrap()
}

/// Adds the course's videos, students, play segments and responses to an
/// empty store. Deterministic for a given seed.
pub fn populate(store: &Store, seed: u64) -> Result<(), StoreError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..STUDENTS {
        store.add_account(UserAccount {
            login_id: student_id(i),
            password_hash: None,
            role: Role::Student,
            display_name: format!("Student {:02}", i + 1),
        })?;
    }
    for (week, v) in COURSE.iter().enumerate() {
        let video_id = v.video_id();
        let duration_s = f64::from(v.length_s);
        store.add_video(Video {
            video_id: video_id.clone(),
            title: v.title.to_owned(),
            duration_s,
            source_uri: format!("/media/{video_id}.mp4"),
            lecture_label: v.lecture.to_owned(),
            ordinal: v.ordinal,
        })?;
        let day = base_time() + Duration::days(7 * week as i64);
        let half = (duration_s / 2.0).floor();
        let segments = (0..v.played)
            .flat_map(|i| [(0.0, half), (half, duration_s)].map(|(start, end)| (i, start, end)))
            .map(|(i, start, end)| PlaySegment {
                student_id: student_id(i),
                video_id: video_id.clone(),
                start_pos_s: start,
                end_pos_s: end,
                playback_rate: 1.0,
                recorded_at: day,
            })
            .collect();
        store.append_play_segments(segments)?;

        let mut types: Vec<ResponseType> = ResponseType::ALL
            .into_iter()
            .flat_map(|t| std::iter::repeat_n(t, v.count(t)))
            .collect();
        types.shuffle(&mut rng);
        let owners = per_student_totals(v)
            .into_iter()
            .enumerate()
            .flat_map(|(i, c)| std::iter::repeat_n(i, c));
        for (n, (rtype, student)) in types.into_iter().zip(owners).enumerate() {
            let position_s = (rng.random_range(0.0..=duration_s) * 10.0).round() / 10.0;
            store.append_response(Response {
                response_id: format!("{video_id}-r{:03}", n + 1).into(),
                student_id: student_id(student),
                video_id: video_id.clone(),
                position_s: position_s.min(duration_s),
                rtype,
                text: (rtype == ResponseType::Question)
                    .then(|| format!("Question about {} at {position_s:.0} s", v.title)),
                created_at: day + Duration::seconds(n as i64),
            })?;
        }
    }
    Ok(())
}
