//! Temporal and dynamics features of a trajectory segment.
//!
//! Every quantity here is an exact, deterministic function of the points:
//! distances are great-circle sums, speeds are per-leg finite differences
//! and inactivity is a run-length analysis over slow legs.

use chrono::{DateTime, Datelike, Timelike, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{heading_change_deg, initial_bearing_deg};
use crate::trajectory::{GpsPoint, TrajectorySegment};

pub use crate::geo::haversine_m;

/// Legs shorter than this carry no usable heading.
pub const MIN_BEARING_LEG_M: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("degenerate segment: duration is {0} s")]
    ZeroDuration(f64),
    #[error("degenerate segment: {0} points, at least 2 required")]
    TooFewPoints(usize),
    #[error("invalid kinematics config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsConfig {
    pub sharp_turn_deg: f64,
    pub stationary_speed_mps: f64,
    pub brief_min_s: f64,
    pub brief_max_s: f64,
    pub prolonged_min_s: f64,
    /// Offset applied for day-type and time-of-day buckets (Beijing is +8).
    pub local_utc_offset_h: f64,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self {
            sharp_turn_deg: 30.0,
            stationary_speed_mps: 0.5,
            brief_min_s: 2.0,
            brief_max_s: 8.0,
            prolonged_min_s: 10.0,
            local_utc_offset_h: 8.0,
        }
    }
}

impl KinematicsConfig {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let checks = [
            ("sharp_turn_deg", self.sharp_turn_deg > 0.0 && self.sharp_turn_deg <= 180.0),
            ("stationary_speed_mps", self.stationary_speed_mps > 0.0),
            ("brief_min_s", self.brief_min_s >= 0.0),
            ("brief_max_s", self.brief_max_s >= self.brief_min_s),
            ("prolonged_min_s", self.prolonged_min_s >= self.brief_max_s),
            ("local_utc_offset_h", self.local_utc_offset_h.abs() <= 14.0),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(KinematicsError::Config(format!("{name} out of range"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayType {
    Weekday,
    Weekend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeOfDay {
    MorningPeak,
    EveningPeak,
    DaytimeOffpeak,
    Night,
}

impl TimeOfDay {
    /// Buckets a local wall-clock hour: 7-9 and 17-19 are peaks, 22-6 is night.
    pub fn from_local_hour(h: u32) -> Self {
        match h {
            7..=8 => TimeOfDay::MorningPeak,
            17..=18 => TimeOfDay::EveningPeak,
            22.. | 0..=5 => TimeOfDay::Night,
            _ => TimeOfDay::DaytimeOffpeak,
        }
    }

    pub fn is_peak(self) -> bool {
        matches!(self, TimeOfDay::MorningPeak | TimeOfDay::EveningPeak)
    }
}

/// A maximal run of slow legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InactivityPeriod {
    pub start_ts: f64,
    pub end_ts: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalInfo {
    pub start_ts: f64,
    pub end_ts: f64,
    pub duration_s: f64,
    pub day_type: DayType,
    pub time_of_day: TimeOfDay,
    pub inactivity_periods: Vec<InactivityPeriod>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsInfo {
    pub avg_speed_mps: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub speed_std_mps: f64,
    pub sharp_turn_count: usize,
    pub brief_stop_count: usize,
    pub prolonged_stop_count: usize,
    pub path_length_m: f64,
    pub straight_line_m: f64,
    pub detour_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicsReport {
    pub segment_id: String,
    pub temporal: TemporalInfo,
    pub dynamics: DynamicsInfo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedProfile {
    pub avg_mps: f64,
    pub min_mps: f64,
    pub max_mps: f64,
    pub std_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopSummary {
    pub periods: Vec<InactivityPeriod>,
    pub brief: usize,
    pub prolonged: usize,
}

/// Sum of great-circle leg lengths.
pub fn path_length_m(points: &[GpsPoint]) -> f64 {
    points.windows(2).map(|w| haversine_m(&w[0], &w[1])).sum()
}

/// Great-circle distance from the first to the last point.
pub fn straight_line_m(points: &[GpsPoint]) -> f64 {
    match (points.first(), points.last()) {
        (Some(a), Some(b)) => haversine_m(a, b),
        _ => 0.0,
    }
}

/// Path length over straight-line distance; `None` when the ends coincide.
///
/// ```
/// use trajscene::kinematics::detour_index;
/// use trajscene::trajectory::GpsPoint;
/// let pts = [
///     GpsPoint::new(0.0, 0.0, 0.0).unwrap(),
///     GpsPoint::new(0.01, 0.0, 10.0).unwrap(),
/// ];
/// assert_eq!(detour_index(&pts), Some(1.0));
/// ```
pub fn detour_index(points: &[GpsPoint]) -> Option<f64> {
    let chord = straight_line_m(points);
    if chord > 0.0 {
        Some(path_length_m(points) / chord)
    } else {
        None
    }
}

/// Per-leg speeds in m/s. Legs with non-positive Δt are reported as zero speed.
pub fn leg_speeds(points: &[GpsPoint]) -> Vec<f64> {
    points
        .windows(2)
        .map(|w| {
            let dt = w[1].ts - w[0].ts;
            if dt > 0.0 {
                haversine_m(&w[0], &w[1]) / dt
            } else {
                0.0
            }
        })
        .collect()
}

/// Average speed (path over duration) plus min/max/population-std of leg speeds.
pub fn speed_profile(points: &[GpsPoint]) -> Result<SpeedProfile, KinematicsError> {
    if points.len() < 2 {
        return Err(KinematicsError::TooFewPoints(points.len()));
    }
    let duration = points[points.len() - 1].ts - points[0].ts;
    if duration <= 0.0 {
        return Err(KinematicsError::ZeroDuration(duration));
    }
    let speeds = leg_speeds(points);
    let n = speeds.len() as f64;
    let mean = speeds.iter().sum::<f64>() / n;
    let var = speeds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(SpeedProfile {
        avg_mps: path_length_m(points) / duration,
        min_mps: speeds.iter().copied().fold(f64::INFINITY, f64::min),
        max_mps: speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        std_mps: var.sqrt(),
    })
}

/// Counts heading changes of at least `sharp_turn_deg` between consecutive
/// legs. Legs under [`MIN_BEARING_LEG_M`] are skipped, so the comparison is
/// between consecutive *usable* legs.
pub fn turn_analysis(points: &[GpsPoint], sharp_turn_deg: f64) -> usize {
    let bearings: Vec<f64> = points
        .windows(2)
        .filter(|w| haversine_m(&w[0], &w[1]) >= MIN_BEARING_LEG_M)
        .map(|w| initial_bearing_deg(&w[0], &w[1]))
        .collect();
    bearings
        .windows(2)
        .filter(|b| heading_change_deg(b[0], b[1]) >= sharp_turn_deg)
        .count()
}

/// Finds maximal runs of legs slower than `stationary_speed_mps` and buckets
/// them: `[brief_min_s, brief_max_s]` is brief, `> prolonged_min_s` is
/// prolonged, anything else is reported but not counted.
pub fn stop_analysis(points: &[GpsPoint], cfg: &KinematicsConfig) -> StopSummary {
    let speeds = leg_speeds(points);
    let mut periods = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=speeds.len() {
        let slow = i < speeds.len() && speeds[i] < cfg.stationary_speed_mps;
        match (slow, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                let (start_ts, end_ts) = (points[s].ts, points[i].ts);
                periods.push(InactivityPeriod {
                    start_ts,
                    end_ts,
                    duration_s: end_ts - start_ts,
                });
                run_start = None;
            }
            _ => {}
        }
    }
    let brief = periods
        .iter()
        .filter(|p| p.duration_s >= cfg.brief_min_s && p.duration_s <= cfg.brief_max_s)
        .count();
    let prolonged = periods
        .iter()
        .filter(|p| p.duration_s > cfg.prolonged_min_s)
        .count();
    StopSummary {
        periods,
        brief,
        prolonged,
    }
}

/// Local calendar day type and time-of-day bucket for a Unix timestamp.
pub fn local_calendar(ts: f64, utc_offset_h: f64) -> (DayType, TimeOfDay, DateTime<chrono::Utc>) {
    let local_secs = (ts + utc_offset_h * 3600.0).floor() as i64;
    let local = DateTime::from_timestamp(local_secs, 0).expect("timestamp within chrono range");
    let day_type = match local.weekday() {
        Weekday::Sat | Weekday::Sun => DayType::Weekend,
        _ => DayType::Weekday,
    };
    (day_type, TimeOfDay::from_local_hour(local.hour()), local)
}

pub fn temporal_info(seg: &TrajectorySegment, cfg: &KinematicsConfig) -> TemporalInfo {
    let (day_type, time_of_day, _) = local_calendar(seg.start_ts(), cfg.local_utc_offset_h);
    TemporalInfo {
        start_ts: seg.start_ts(),
        end_ts: seg.end_ts(),
        duration_s: seg.duration_s(),
        day_type,
        time_of_day,
        inactivity_periods: stop_analysis(seg.points(), cfg).periods,
    }
}

/// Computes the full report for one segment.
pub fn analyze(
    seg: &TrajectorySegment,
    cfg: &KinematicsConfig,
) -> Result<KinematicsReport, KinematicsError> {
    let pts = seg.points();
    let speed = speed_profile(pts)?;
    let stops = stop_analysis(pts, cfg);
    let (day_type, time_of_day, _) = local_calendar(seg.start_ts(), cfg.local_utc_offset_h);
    let path = path_length_m(pts);
    let chord = straight_line_m(pts);
    Ok(KinematicsReport {
        segment_id: seg.id().to_string(),
        temporal: TemporalInfo {
            start_ts: seg.start_ts(),
            end_ts: seg.end_ts(),
            duration_s: seg.duration_s(),
            day_type,
            time_of_day,
            inactivity_periods: stops.periods,
        },
        dynamics: DynamicsInfo {
            avg_speed_mps: speed.avg_mps,
            speed_min_mps: speed.min_mps,
            speed_max_mps: speed.max_mps,
            speed_std_mps: speed.std_mps,
            sharp_turn_count: turn_analysis(pts, cfg.sharp_turn_deg),
            brief_stop_count: stops.brief,
            prolonged_stop_count: stops.prolonged,
            path_length_m: path,
            straight_line_m: chord,
            detour_index: (chord > 0.0).then(|| path / chord),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::EARTH_RADIUS_M;

    fn deg(m: f64) -> f64 {
        (m / EARTH_RADIUS_M).to_degrees()
    }

    /// Point `x_m` east and `y_m` north of (0, 0), valid for small offsets.
    fn en(x_m: f64, y_m: f64, ts: f64) -> GpsPoint {
        GpsPoint::new(deg(x_m), deg(y_m), ts).unwrap()
    }

    fn seg(points: Vec<GpsPoint>) -> TrajectorySegment {
        TrajectorySegment::new("t", points, None).unwrap()
    }

    #[test]
    fn path_length_cases() {
        let two = [en(0.0, 0.0, 0.0), en(300.0, 400.0, 10.0)];
        assert_eq!(path_length_m(&two), haversine_m(&two[0], &two[1]));

        let a = GpsPoint::new(0.0, 0.0, 0.0).unwrap();
        let b = GpsPoint::new(0.005, 0.0, 1.0).unwrap();
        let c = GpsPoint::new(0.010, 0.0, 2.0).unwrap();
        let expected = 2.0 * haversine_m(&a, &b);
        assert!((path_length_m(&[a, b, c]) - expected).abs() / expected < 1e-6);

        let same: Vec<_> = (0..4).map(|i| GpsPoint::new(116.3, 39.9, i as f64).unwrap()).collect();
        assert_eq!(path_length_m(&same), 0.0);
    }

    #[test]
    fn detour_cases() {
        // Out 1343.5 m east, back 656.5 m: path 2000 m, chord 687 m.
        let pts = [en(0.0, 0.0, 0.0), en(1343.5, 0.0, 400.0), en(687.0, 0.0, 645.0)];
        let d = detour_index(&pts).unwrap();
        assert!((d - 2000.0 / 687.0).abs() < 1e-9, "{d}");
        assert!((d - 2.911).abs() < 5e-4);

        let two = [en(0.0, 0.0, 0.0), en(10.0, 5.0, 1.0)];
        assert!((detour_index(&two).unwrap() - 1.0).abs() < 1e-12);

        let lp = [en(0.0, 0.0, 0.0), en(100.0, 0.0, 1.0), en(0.0, 0.0, 2.0)];
        assert_eq!(detour_index(&lp), None);
    }

    #[test]
    fn speed_profile_cases() {
        let pts = [en(0.0, 0.0, 0.0), en(1343.5, 0.0, 400.0), en(687.0, 0.0, 645.0)];
        let sp = speed_profile(&pts).unwrap();
        assert!((sp.avg_mps - 3.101).abs() < 5e-4);
        assert!((sp.avg_mps * 3.6 - 11.16).abs() < 0.01);

        let constant: Vec<_> = (0..10).map(|i| en(5.0 * i as f64, 0.0, i as f64)).collect();
        let sp = speed_profile(&constant).unwrap();
        assert!(sp.std_mps < 1e-9);
        assert!((sp.min_mps - sp.avg_mps).abs() < 1e-9 && (sp.max_mps - sp.avg_mps).abs() < 1e-9);

        // 1 m/s for 10 s then 3 m/s for 10 s.
        let pts = [en(0.0, 0.0, 0.0), en(10.0, 0.0, 10.0), en(40.0, 0.0, 20.0)];
        let sp = speed_profile(&pts).unwrap();
        assert!((sp.min_mps - 1.0).abs() < 1e-9);
        assert!((sp.max_mps - 3.0).abs() < 1e-9);
        assert!((sp.avg_mps - 2.0).abs() < 1e-9);
        assert!((sp.std_mps - 1.0).abs() < 1e-9);

        let flat = [en(0.0, 0.0, 5.0), en(1.0, 0.0, 5.0)];
        assert_eq!(speed_profile(&flat), Err(KinematicsError::ZeroDuration(0.0)));
    }

    #[test]
    fn turn_cases() {
        let straight = [en(0.0, 0.0, 0.0), en(100.0, 0.0, 1.0), en(200.0, 0.0, 2.0)];
        assert_eq!(turn_analysis(&straight, 30.0), 0);

        let right_angle = [en(0.0, 0.0, 0.0), en(100.0, 0.0, 1.0), en(100.0, 100.0, 2.0)];
        let b1 = initial_bearing_deg(&right_angle[0], &right_angle[1]);
        let b2 = initial_bearing_deg(&right_angle[1], &right_angle[2]);
        assert!((heading_change_deg(b1, b2) - 90.0).abs() < 0.01);
        assert_eq!(turn_analysis(&right_angle, 30.0), 1);

        // east, north, east, north, east: four 90° changes.
        let zigzag = [
            en(0.0, 0.0, 0.0),
            en(100.0, 0.0, 1.0),
            en(100.0, 100.0, 2.0),
            en(200.0, 100.0, 3.0),
            en(200.0, 200.0, 4.0),
            en(300.0, 200.0, 5.0),
        ];
        assert_eq!(turn_analysis(&zigzag, 30.0), 4);

        // A sub-meter jitter leg between two collinear legs is ignored.
        let jitter = [
            en(0.0, 0.0, 0.0),
            en(100.0, 0.0, 1.0),
            en(100.0, 0.5, 2.0),
            en(200.0, 0.5, 3.0),
        ];
        assert_eq!(turn_analysis(&jitter, 30.0), 0);
        assert_eq!(turn_analysis(&straight[..2], 30.0), 0);
    }

    fn with_stop(stop_s: u32) -> Vec<GpsPoint> {
        // 5 m/s for 20 s, stationary for `stop_s` seconds, 5 m/s for 20 s.
        let mut pts = Vec::new();
        let mut x = 0.0;
        let mut t = 0.0;
        for _ in 0..20 {
            pts.push(en(x, 0.0, t));
            x += 5.0;
            t += 1.0;
        }
        pts.push(en(x, 0.0, t));
        for _ in 0..stop_s {
            t += 1.0;
            pts.push(en(x, 0.0, t));
        }
        for _ in 0..20 {
            x += 5.0;
            t += 1.0;
            pts.push(en(x, 0.0, t));
        }
        pts
    }

    #[test]
    fn stop_cases() {
        let cfg = KinematicsConfig::default();
        let moving: Vec<_> = (0..50).map(|i| en(5.0 * i as f64, 0.0, i as f64)).collect();
        let s = stop_analysis(&moving, &cfg);
        assert!(s.periods.is_empty());
        assert_eq!((s.brief, s.prolonged), (0, 0));

        let s = stop_analysis(&with_stop(5), &cfg);
        assert_eq!(s.periods.len(), 1);
        assert_eq!(s.periods[0].duration_s, 5.0);
        assert_eq!((s.brief, s.prolonged), (1, 0));

        let s = stop_analysis(&with_stop(30), &cfg);
        assert_eq!(s.periods[0].duration_s, 30.0);
        assert_eq!((s.brief, s.prolonged), (0, 1));

        // 9 s falls in neither bucket, 1 s is below the brief window.
        for d in [1, 9] {
            let s = stop_analysis(&with_stop(d), &cfg);
            assert_eq!(s.periods.len(), 1);
            assert_eq!((s.brief, s.prolonged), (0, 0));
        }
    }

    #[test]
    fn time_of_day_buckets() {
        use TimeOfDay::*;
        let expect = [
            (0, Night),
            (5, Night),
            (6, DaytimeOffpeak),
            (7, MorningPeak),
            (8, MorningPeak),
            (9, DaytimeOffpeak),
            (16, DaytimeOffpeak),
            (17, EveningPeak),
            (18, EveningPeak),
            (19, DaytimeOffpeak),
            (21, DaytimeOffpeak),
            (22, Night),
            (23, Night),
        ];
        for (h, b) in expect {
            assert_eq!(TimeOfDay::from_local_hour(h), b, "hour {h}");
        }
    }

    #[test]
    fn temporal_info_cases() {
        let cfg = KinematicsConfig::default();
        // 2009-03-08 08:18:18 UTC is a Sunday, 16:18 at UTC+8.
        let s = seg(vec![
            GpsPoint::new(116.3, 39.9, 1_236_500_298.0).unwrap(),
            GpsPoint::new(116.31, 39.9, 1_236_500_943.0).unwrap(),
        ]);
        let t = temporal_info(&s, &cfg);
        assert_eq!(t.day_type, DayType::Weekend);
        assert_eq!(t.time_of_day, TimeOfDay::DaytimeOffpeak);
        assert_eq!(t.duration_s, 645.0);
        let (_, tod, _) = local_calendar(1_236_500_298.0 + 3600.0, 8.0);
        assert_eq!(tod, TimeOfDay::EveningPeak);

        // 2009-03-11 (Wednesday) 08:00 local = 00:00 UTC.
        let wed = 1_236_729_600.0;
        let (day, tod, local) = local_calendar(wed, 8.0);
        assert_eq!(local.weekday(), Weekday::Wed);
        assert_eq!((day, tod), (DayType::Weekday, TimeOfDay::MorningPeak));

        // 23:30 local.
        let (_, tod, _) = local_calendar(wed + 15.5 * 3600.0, 8.0);
        assert_eq!(tod, TimeOfDay::Night);
    }

    #[test]
    fn analyze_cases() {
        let cfg = KinematicsConfig::default();
        let s = seg(vec![
            en(0.0, 0.0, 1_236_500_298.0),
            en(1343.5, 0.0, 1_236_500_698.0),
            en(687.0, 0.0, 1_236_500_943.0),
        ]);
        let r = analyze(&s, &cfg).unwrap();
        assert!((r.dynamics.detour_index.unwrap() - 2.911).abs() < 5e-4);
        assert!((r.dynamics.avg_speed_mps - 3.101).abs() < 5e-4);
        assert_eq!(r.temporal.duration_s, 645.0);

        let two = seg(vec![en(0.0, 0.0, 0.0), en(50.0, 0.0, 10.0)]);
        let r = analyze(&two, &cfg).unwrap();
        assert!((r.dynamics.detour_index.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.dynamics.sharp_turn_count, 0);
        assert_eq!((r.dynamics.brief_stop_count, r.dynamics.prolonged_stop_count), (0, 0));

        // Square loop at constant 10 m/s back to the origin.
        let corners = [(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0), (0.0, 0.0)];
        let mut pts = Vec::new();
        let mut t = 0.0;
        for w in corners.windows(2) {
            for i in 0..10 {
                let f = i as f64 / 10.0;
                pts.push(en(w[0].0 + f * (w[1].0 - w[0].0), w[0].1 + f * (w[1].1 - w[0].1), t));
                t += 1.0;
            }
        }
        pts.push(en(0.0, 0.0, t));
        let r = analyze(&seg(pts), &cfg).unwrap();
        assert_eq!(r.dynamics.detour_index, None);
        assert!(r.dynamics.speed_std_mps < 1e-3, "{}", r.dynamics.speed_std_mps);
        assert_eq!(r.dynamics.sharp_turn_count, 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn walk() -> impl Strategy<Value = Vec<GpsPoint>> {
            prop::collection::vec((-300.0f64..300.0, -300.0f64..300.0, 1u32..30), 2..30).prop_map(
                |steps| {
                    let mut t = 1_200_000_000.0;
                    let (mut x, mut y) = (0.0, 0.0);
                    steps
                        .into_iter()
                        .map(|(dx, dy, dt)| {
                            let p = GpsPoint::new(116.3 + deg(x), 39.9 + deg(y), t).unwrap();
                            x += dx;
                            y += dy;
                            t += dt as f64;
                            p
                        })
                        .collect()
                },
            )
        }

        proptest! {
            #[test]
            fn report_invariants(pts in walk()) {
                let cfg = KinematicsConfig::default();
                let r = analyze(&seg(pts.clone()), &cfg).unwrap();
                let d = &r.dynamics;
                prop_assert!(d.path_length_m >= d.straight_line_m - 1e-6);
                if let Some(di) = d.detour_index {
                    prop_assert!(di >= 1.0 - 1e-9);
                }
                let dur = r.temporal.duration_s;
                prop_assert!((d.avg_speed_mps * dur - d.path_length_m).abs() <= 1e-6 * d.path_length_m.max(1.0));
                let speeds = leg_speeds(&pts);
                let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
                prop_assert!(d.speed_min_mps <= mean + 1e-12);
                prop_assert!(speeds.iter().all(|s| *s <= d.speed_max_mps));
                for p in &r.temporal.inactivity_periods {
                    prop_assert!(p.duration_s > 0.0);
                    prop_assert!(p.start_ts >= r.temporal.start_ts && p.end_ts <= r.temporal.end_ts);
                }
            }

            #[test]
            fn time_shift_moves_only_absolute_fields(pts in walk(), shift in 0u32..10_000_000) {
                let cfg = KinematicsConfig::default();
                let shifted: Vec<_> = pts.iter()
                    .map(|p| GpsPoint::new(p.lon, p.lat, p.ts + shift as f64).unwrap())
                    .collect();
                let a = analyze(&seg(pts), &cfg).unwrap();
                let b = analyze(&seg(shifted), &cfg).unwrap();
                prop_assert_eq!(&a.dynamics, &b.dynamics);
                prop_assert_eq!(a.temporal.duration_s, b.temporal.duration_s);
                prop_assert_eq!(b.temporal.start_ts, a.temporal.start_ts + shift as f64);
                prop_assert_eq!(a.temporal.inactivity_periods.len(), b.temporal.inactivity_periods.len());
                for (x, y) in a.temporal.inactivity_periods.iter().zip(&b.temporal.inactivity_periods) {
                    prop_assert_eq!(x.duration_s, y.duration_s);
                }
            }

            #[test]
            fn reversal_preserves_distances(pts in walk()) {
                let t0 = pts[0].ts;
                let t1 = pts[pts.len() - 1].ts;
                let reversed: Vec<_> = pts.iter().rev()
                    .map(|p| GpsPoint::new(p.lon, p.lat, t0 + (t1 - p.ts)).unwrap())
                    .collect();
                let cfg = KinematicsConfig::default();
                let a = analyze(&seg(pts), &cfg).unwrap().dynamics;
                let b = analyze(&seg(reversed), &cfg).unwrap().dynamics;
                prop_assert!((a.path_length_m - b.path_length_m).abs() <= 1e-9 * a.path_length_m.max(1.0));
                prop_assert!((a.straight_line_m - b.straight_line_m).abs() <= 1e-9 * a.straight_line_m.max(1.0));
                match (a.detour_index, b.detour_index) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * x),
                    (x, y) => prop_assert_eq!(x, y),
                }
            }
        }

        /// Rotating a fixture about its centroid in the tangent plane keeps
        /// the sharp-turn count; fixture turn angles stay >1° from 30°.
        #[test]
        fn sharp_turns_invariant_under_rotation() {
            let fixtures: [&[(f64, f64)]; 3] = [
                &[(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (200.0, 100.0), (200.0, 200.0)],
                &[(0.0, 0.0), (100.0, 10.0), (200.0, 0.0), (250.0, 80.0), (300.0, 80.0)],
                &[(0.0, 0.0), (50.0, 50.0), (100.0, 40.0), (60.0, 0.0), (160.0, -20.0), (260.0, -10.0)],
            ];
            for fx in fixtures {
                let n = fx.len() as f64;
                let cx = fx.iter().map(|p| p.0).sum::<f64>() / n;
                let cy = fx.iter().map(|p| p.1).sum::<f64>() / n;
                let build = |angle: f64| -> Vec<GpsPoint> {
                    let (s, c) = angle.to_radians().sin_cos();
                    fx.iter().enumerate().map(|(i, &(x, y))| {
                        let (dx, dy) = (x - cx, y - cy);
                        en(cx + c * dx - s * dy, cy + s * dx + c * dy, i as f64)
                    }).collect()
                };
                let base = turn_analysis(&build(0.0), 30.0);
                for angle in [17.0, 45.0, 90.0, 133.0, 200.0, 271.0, 333.0] {
                    assert_eq!(turn_analysis(&build(angle), 30.0), base, "angle {angle}");
                }
            }
        }
    }
}
