//! Ordinary least squares of a video's per-player average on its length.

use serde::Serialize;

use super::usage::{usage_stats, UsageError};
use crate::domain::VideoId;
use crate::store::State;

#[derive(Debug, thiserror::Error)]
pub enum RegressionError {
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("all x values are equal; the slope is undefined")]
    ConstantX,
    #[error("all y values are equal; r² is undefined")]
    ConstantY,
    #[error("non-finite input at point {0}")]
    NotFinite(usize),
    #[error(transparent)]
    Usage(#[from] UsageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub const MIN_VIDEOS: usize = 3;

/// Fits `y = slope·x + intercept`; `r_squared` is the squared Pearson
/// correlation. Sums are taken about the means.
pub fn fit_line(points: &[(f64, f64)]) -> Result<CorrelationResult, RegressionError> {
    if let Some(i) = points
        .iter()
        .position(|(x, y)| !x.is_finite() || !y.is_finite())
    {
        return Err(RegressionError::NotFinite(i));
    }
    let n = points.len();
    if n > 0 && points.iter().all(|p| p.0 == points[0].0) {
        return Err(RegressionError::ConstantX);
    }
    if n < MIN_VIDEOS {
        return Err(RegressionError::TooFewPoints {
            min: MIN_VIDEOS,
            got: n,
        });
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if syy == 0.0 {
        return Err(RegressionError::ConstantY);
    }
    let slope = sxy / sxx;
    let r_squared = ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0);
    Ok(CorrelationResult {
        n,
        slope,
        intercept: mean_y - slope * mean_x,
        r_squared,
    })
}

/// Regresses average responses per player on video length in minutes.
pub fn length_response_correlation(
    snapshot: &State,
    video_ids: &[VideoId],
) -> Result<CorrelationResult, RegressionError> {
    let points = video_ids
        .iter()
        .map(|id| {
            let s = usage_stats(snapshot, id)?;
            let avg = s.avg.ok_or_else(|| UsageError::NoPlayers(id.clone()))?;
            Ok((s.length_s / 60.0, avg))
        })
        .collect::<Result<Vec<_>, RegressionError>>()?;
    fit_line(&points)
}
