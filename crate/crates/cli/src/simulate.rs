//! Synthetic classroom generator.
//!
//! Every student watches every video once. The number of responses a student
//! leaves on a video is Poisson with mean `rate · duration / 600`, and each
//! position is drawn either uniformly over the video or from a Gaussian
//! around one of the video's hotspots.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rc_core::{
    LoginId, PlaySegment, Response, ResponseType, Role, Store, StoreError, UserAccount, Video,
    VideoId,
};

/// Share of responses drawn from hotspots when there are any.
const HOTSPOT_WEIGHT: f64 = 0.6;
/// Hotspot spread as a fraction of the video's duration.
const HOTSPOT_SIGMA: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub students: usize,
    pub videos: usize,
    pub seed: u64,
    /// Expected responses per student per 10 minutes of video.
    pub rate: f64,
    pub duration_s: f64,
    pub hotspots: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimSummary {
    pub students: usize,
    pub videos: usize,
    pub segments: usize,
    pub responses: usize,
}

/// The instant every generated record is stamped relative to.
pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 1, 6, 9, 0, 0).unwrap()
}

pub fn student_id(i: usize) -> LoginId {
    LoginId::new(format!("sim-s{:03}", i + 1))
}

pub fn video_id(j: usize) -> VideoId {
    VideoId::new(format!("sim-v{:02}", j + 1))
}

/// Position of one response: uniform background or a hotspot, clamped to
/// the video and rounded to 0.1 s.
fn draw_position(rng: &mut ChaCha8Rng, duration_s: f64, hotspots: &[Normal<f64>]) -> f64 {
    let raw = if !hotspots.is_empty() && rng.random_bool(HOTSPOT_WEIGHT) {
        let h = &hotspots[rng.random_range(0..hotspots.len())];
        h.sample(rng)
    } else {
        rng.random_range(0.0..=duration_s)
    };
    ((raw.clamp(0.0, duration_s) * 10.0).round() / 10.0).min(duration_s)
}

pub fn generate(store: &Store, cfg: &SimConfig) -> Result<SimSummary, StoreError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut summary = SimSummary {
        students: cfg.students,
        videos: cfg.videos,
        ..SimSummary::default()
    };
    for i in 0..cfg.students {
        store.add_account(UserAccount {
            login_id: student_id(i),
            password_hash: None,
            role: Role::Student,
            display_name: format!("Simulated student {}", i + 1),
        })?;
    }
    let lambda = cfg.rate * cfg.duration_s / 600.0;
    let poisson = (lambda > 0.0).then(|| Poisson::new(lambda).expect("positive finite mean"));
    for j in 0..cfg.videos {
        let vid = video_id(j);
        store.add_video(Video {
            video_id: vid.clone(),
            title: format!("Simulated video {}", j + 1),
            duration_s: cfg.duration_s,
            source_uri: format!("/media/{vid}.mp4"),
            lecture_label: String::new(),
            ordinal: j as u32 + 1,
        })?;
        let day = epoch() + Duration::days(7 * j as i64);
        let hotspots: Vec<Normal<f64>> = (0..cfg.hotspots)
            .map(|_| {
                let centre = rng.random_range(0.05..=0.95) * cfg.duration_s;
                Normal::new(centre, HOTSPOT_SIGMA * cfg.duration_s).expect("positive sigma")
            })
            .collect();

        let segments: Vec<PlaySegment> = (0..cfg.students)
            .map(|i| PlaySegment {
                student_id: student_id(i),
                video_id: vid.clone(),
                start_pos_s: 0.0,
                end_pos_s: cfg.duration_s,
                playback_rate: 1.0,
                recorded_at: day,
            })
            .collect();
        summary.segments += store.append_play_segments(segments)?.len();

        for i in 0..cfg.students {
            let n = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
            for k in 0..n {
                let rtype = ResponseType::ALL[rng.random_range(0..ResponseType::ALL.len())];
                let position_s = draw_position(&mut rng, cfg.duration_s, &hotspots);
                let sid = student_id(i);
                store.append_response(Response {
                    response_id: format!("{vid}-{sid}-{:03}", k + 1).into(),
                    text: (rtype == ResponseType::Question)
                        .then(|| format!("Question {} from {sid}", k + 1)),
                    student_id: sid,
                    video_id: vid.clone(),
                    position_s,
                    rtype,
                    created_at: day + Duration::milliseconds((position_s * 1000.0) as i64),
                })?;
                summary.responses += 1;
            }
        }
    }
    store.flush()?;
    Ok(summary)
}
