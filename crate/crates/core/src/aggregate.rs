//! Aggregation of stored responses into the views shown to teachers and
//! students: per-type binned series, per-student tracks, peaks and the
//! question list.
//!
//! Bins are half-open, `[k·w, (k+1)·w)`, with a position equal to the video
//! duration folded into the last bin, so every valid position lands in
//! exactly one bin. Counts are raw; no smoothing is applied.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::Serialize;

use crate::domain::{LoginId, Response, ResponseId, ResponseType, VideoId};
use crate::store::{sort_responses, State, StoreError};

pub const DEFAULT_BIN_WIDTH_S: f64 = 5.0;

/// Refuse bin widths that would allocate more bins than this.
pub const MAX_BINS: usize = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum AggregateError {
    #[error("bin width must be a positive number, got {0}")]
    NonPositiveBinWidth(f64),
    #[error("bin width {width} gives more than {MAX_BINS} bins for a {duration} s video")]
    TooManyBins { width: f64, duration: f64 },
    #[error("position {position} of response {response_id} not in [0, {duration}]")]
    PositionOutOfRange {
        response_id: ResponseId,
        position: f64,
        duration: f64,
    },
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Per-type response counts over fixed-width bins of one video.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedSeries {
    pub video_id: VideoId,
    pub bin_width_s: f64,
    pub n_bins: usize,
    pub counts: BTreeMap<ResponseType, Vec<u32>>,
}

impl BinnedSeries {
    pub fn counts_of(&self, rtype: ResponseType) -> &[u32] {
        &self.counts[&rtype]
    }

    pub fn total(&self, rtype: ResponseType) -> u64 {
        self.counts_of(rtype).iter().map(|&c| u64::from(c)).sum()
    }

    pub fn bin_start_s(&self, bin_index: usize) -> f64 {
        bin_index as f64 * self.bin_width_s
    }
}

/// Number of bins covering `[0, duration_s]` at `bin_width_s`.
pub fn bin_count(duration_s: f64, bin_width_s: f64) -> Result<usize, AggregateError> {
    if !(bin_width_s.is_finite() && bin_width_s > 0.0) {
        return Err(AggregateError::NonPositiveBinWidth(bin_width_s));
    }
    let n = (duration_s / bin_width_s).ceil();
    if !(n <= MAX_BINS as f64) {
        return Err(AggregateError::TooManyBins {
            width: bin_width_s,
            duration: duration_s,
        });
    }
    Ok((n as usize).max(1))
}

fn bin_of(position_s: f64, bin_width_s: f64, n_bins: usize) -> usize {
    ((position_s / bin_width_s).floor() as usize).min(n_bins - 1)
}

pub fn bin_responses<'a>(
    video_id: &VideoId,
    responses: impl IntoIterator<Item = &'a Response>,
    duration_s: f64,
    bin_width_s: f64,
) -> Result<BinnedSeries, AggregateError> {
    let n_bins = bin_count(duration_s, bin_width_s)?;
    let mut counts: BTreeMap<ResponseType, Vec<u32>> = ResponseType::ALL
        .into_iter()
        .map(|t| (t, vec![0; n_bins]))
        .collect();
    for r in responses {
        if !(0.0..=duration_s).contains(&r.position_s) {
            return Err(AggregateError::PositionOutOfRange {
                response_id: r.response_id.clone(),
                position: r.position_s,
                duration: duration_s,
            });
        }
        let bins = counts.get_mut(&r.rtype).expect("every type has a row");
        bins[bin_of(r.position_s, bin_width_s, n_bins)] += 1;
    }
    Ok(BinnedSeries {
        video_id: video_id.clone(),
        bin_width_s,
        n_bins,
        counts,
    })
}

/// Bins every stored response of a video.
pub fn aggregate_video(
    snapshot: &State,
    video_id: &VideoId,
    bin_width_s: f64,
) -> Result<BinnedSeries, AggregateError> {
    let video = snapshot.require_video(video_id)?;
    let responses = snapshot.video_responses(video_id)?;
    bin_responses(video_id, responses, video.duration_s, bin_width_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub rtype: ResponseType,
    pub bin_index: usize,
    pub bin_start_s: f64,
    pub count: u32,
}

/// Up to `k` bins with the most responses of `rtype`, by count descending and
/// then by bin index ascending. Empty bins are never peaks.
pub fn find_peaks(
    series: &BinnedSeries,
    rtype: ResponseType,
    k: usize,
) -> Result<Vec<Peak>, AggregateError> {
    if k == 0 {
        return Err(AggregateError::ZeroK);
    }
    // Min-heap of the best k seen so far; the root is the weakest candidate.
    let mut heap: BinaryHeap<Reverse<(u32, Reverse<usize>)>> = BinaryHeap::with_capacity(k + 1);
    for (i, &count) in series.counts_of(rtype).iter().enumerate() {
        if count == 0 {
            continue;
        }
        heap.push(Reverse((count, Reverse(i))));
        if heap.len() > k {
            heap.pop();
        }
    }
    let mut best: Vec<(u32, usize)> = heap
        .into_iter()
        .map(|Reverse((count, Reverse(i)))| (count, i))
        .collect();
    best.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(best
        .into_iter()
        .map(|(count, bin_index)| Peak {
            rtype,
            bin_index,
            bin_start_s: series.bin_start_s(bin_index),
            count,
        })
        .collect())
}

/// How students are named when their responses are shown to others.
///
/// When anonymizing, students are numbered `student-01`, `student-02`, ... in
/// order of their first response to the video, which keeps a student's key
/// stable as more responses arrive.
#[derive(Debug, Clone)]
pub struct DisplayKeys {
    anonymous: Option<HashMap<LoginId, usize>>,
}

impl DisplayKeys {
    pub fn identified() -> Self {
        Self { anonymous: None }
    }

    /// `responses` must be in append order.
    pub fn anonymized<'a>(responses: impl IntoIterator<Item = &'a Response>) -> Self {
        let mut numbers = HashMap::new();
        for r in responses {
            let next = numbers.len() + 1;
            numbers.entry(r.student_id.clone()).or_insert(next);
        }
        Self {
            anonymous: Some(numbers),
        }
    }

    pub fn for_video<'a>(
        anonymize: bool,
        responses: impl IntoIterator<Item = &'a Response>,
    ) -> Self {
        if anonymize {
            Self::anonymized(responses)
        } else {
            Self::identified()
        }
    }

    pub fn is_anonymous(&self) -> bool {
        self.anonymous.is_some()
    }

    pub fn key(&self, student: &LoginId) -> String {
        match &self.anonymous {
            None => student.to_string(),
            Some(numbers) => match numbers.get(student) {
                Some(n) => format!("student-{n:02}"),
                None => "student-??".to_owned(),
            },
        }
    }

    fn cmp_students(&self, a: &LoginId, b: &LoginId) -> Ordering {
        match &self.anonymous {
            None => a.cmp(b),
            Some(numbers) => numbers.get(a).cmp(&numbers.get(b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackEntry {
    pub position_s: f64,
    pub rtype: ResponseType,
    pub response_id: ResponseId,
}

/// One student's responses to a video, in position order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudentTrack {
    pub student_key: String,
    pub entries: Vec<TrackEntry>,
}

pub fn student_tracks<'a>(
    responses: impl IntoIterator<Item = &'a Response>,
    keys: &DisplayKeys,
) -> Vec<StudentTrack> {
    let mut by_student: HashMap<&LoginId, Vec<Response>> = HashMap::new();
    for r in responses {
        by_student.entry(&r.student_id).or_default().push(r.clone());
    }
    let mut students: Vec<(&LoginId, Vec<Response>)> = by_student.into_iter().collect();
    students.sort_by(|a, b| keys.cmp_students(a.0, b.0));
    students
        .into_iter()
        .map(|(student, mut rs)| {
            sort_responses(&mut rs);
            StudentTrack {
                student_key: keys.key(student),
                entries: rs
                    .into_iter()
                    .map(|r| TrackEntry {
                        position_s: r.position_s,
                        rtype: r.rtype,
                        response_id: r.response_id,
                    })
                    .collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionEntry {
    pub position_s: f64,
    pub student_key: String,
    pub text: String,
    pub response_id: ResponseId,
}

/// Question responses in position order.
pub fn question_list<'a>(
    responses: impl IntoIterator<Item = &'a Response>,
    keys: &DisplayKeys,
) -> Vec<QuestionEntry> {
    let mut questions: Vec<Response> = responses
        .into_iter()
        .filter(|r| r.rtype == ResponseType::Question)
        .cloned()
        .collect();
    sort_responses(&mut questions);
    questions
        .into_iter()
        .map(|r| QuestionEntry {
            position_s: r.position_s,
            student_key: keys.key(&r.student_id),
            text: r.text.unwrap_or_default(),
            response_id: r.response_id,
        })
        .collect()
}

/// Question list of a stored video.
pub fn video_questions(
    snapshot: &State,
    video_id: &VideoId,
    anonymize: bool,
) -> Result<Vec<QuestionEntry>, StoreError> {
    let responses = snapshot.video_responses(video_id)?;
    let keys = DisplayKeys::for_video(anonymize, responses.iter().copied());
    Ok(question_list(responses, &keys))
}

/// Per-student tracks of a stored video.
pub fn video_tracks(
    snapshot: &State,
    video_id: &VideoId,
    anonymize: bool,
) -> Result<Vec<StudentTrack>, StoreError> {
    let responses = snapshot.video_responses(video_id)?;
    let keys = DisplayKeys::for_video(anonymize, responses.iter().copied());
    Ok(student_tracks(responses, &keys))
}
