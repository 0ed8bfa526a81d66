//! Point cleaning and label-driven segmentation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::haversine_m;
use crate::trajectory::{normalize_mode, GpsPoint, LabelInterval, TrajectorySegment};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("invalid cleaning config: {0}")]
    Config(String),
    #[error(
        "label intervals overlap: [{first_start}, {first_end}] ({first_mode}) and [{second_start}, {second_end}] ({second_mode})"
    )]
    Overlap {
        first_start: f64,
        first_end: f64,
        first_mode: String,
        second_start: f64,
        second_end: f64,
        second_mode: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    /// Points implying a faster speed from their predecessor are dropped.
    pub max_speed_mps: f64,
    /// Runs are split where consecutive points are further apart than this.
    pub max_gap_s: f64,
    pub min_points: usize,
    pub min_duration_s: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            max_speed_mps: 83.3,
            max_gap_s: 1200.0,
            min_points: 10,
            min_duration_s: 60.0,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(PreprocessError::Config(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("max_speed_mps", self.max_speed_mps)?;
        positive("max_gap_s", self.max_gap_s)?;
        positive("min_duration_s", self.min_duration_s)?;
        if self.min_points < 2 {
            return Err(PreprocessError::Config(format!(
                "min_points must be >= 2, got {}",
                self.min_points
            )));
        }
        Ok(())
    }
}

/// Greedy forward filter: keeps a point only if its timestamp is strictly
/// after the last kept point and the implied speed from it is within
/// `max_speed_mps`.
pub fn clean(points: &[GpsPoint], cfg: &CleaningConfig) -> Vec<GpsPoint> {
    let mut out: Vec<GpsPoint> = Vec::with_capacity(points.len());
    for p in points {
        if let Some(prev) = out.last() {
            let dt = p.ts - prev.ts;
            if dt <= 0.0 {
                continue;
            }
            if haversine_m(prev, p) / dt > cfg.max_speed_mps {
                continue;
            }
        }
        out.push(*p);
    }
    out
}

/// Cuts cleaned points into labeled segments.
///
/// Each label interval whose mode normalizes to one of the five modes takes
/// the points with `start_ts <= ts <= end_ts`; a point on a shared boundary
/// belongs to the earlier interval. Runs are split at gaps larger than
/// `max_gap_s` and short pieces are dropped. Segment ids are
/// `{id_prefix}{start_ts}-{piece}` with `start_ts` the interval start in
/// whole seconds.
pub fn segment_by_labels(
    points: &[GpsPoint],
    labels: &[LabelInterval],
    cfg: &CleaningConfig,
    id_prefix: &str,
) -> Result<Vec<TrajectorySegment>, PreprocessError> {
    let mut sorted: Vec<&LabelInterval> = labels.iter().collect();
    sorted.sort_by(|a, b| {
        a.start_ts
            .total_cmp(&b.start_ts)
            .then(a.end_ts.total_cmp(&b.end_ts))
            .then(a.raw_mode.cmp(&b.raw_mode))
    });
    for w in sorted.windows(2) {
        if w[1].start_ts < w[0].end_ts {
            return Err(PreprocessError::Overlap {
                first_start: w[0].start_ts,
                first_end: w[0].end_ts,
                first_mode: w[0].raw_mode.clone(),
                second_start: w[1].start_ts,
                second_end: w[1].end_ts,
                second_mode: w[1].raw_mode.clone(),
            });
        }
    }

    let mut segments = Vec::new();
    let mut claimed_until = f64::NEG_INFINITY;
    for label in sorted {
        let lo = points.partition_point(|p| p.ts < label.start_ts || p.ts <= claimed_until);
        let hi = points.partition_point(|p| p.ts <= label.end_ts);
        claimed_until = claimed_until.max(label.end_ts);
        let Some(mode) = normalize_mode(&label.raw_mode) else {
            continue;
        };
        if lo >= hi {
            continue;
        }
        let run = &points[lo..hi];
        let mut piece = 0usize;
        let mut start = 0usize;
        for i in 1..=run.len() {
            let split = i == run.len() || run[i].ts - run[i - 1].ts > cfg.max_gap_s;
            if !split {
                continue;
            }
            let chunk = &run[start..i];
            start = i;
            if chunk.len() < cfg.min_points.max(2) {
                continue;
            }
            let duration = chunk[chunk.len() - 1].ts - chunk[0].ts;
            if duration < cfg.min_duration_s {
                continue;
            }
            let id = format!("{id_prefix}{}-{piece}", label.start_ts.floor() as i64);
            piece += 1;
            let seg = TrajectorySegment::new(id, chunk.to_vec(), Some(mode))
                .expect("cleaned points are strictly increasing");
            segments.push(seg);
        }
    }
    Ok(segments)
}
