//! The textual modality.
//!
//! [`render_narrative`] fills a fixed three-section template from a
//! [`KinematicsReport`]. [`build_prompt`] and [`remote_narrative`] implement
//! the alternative path where a hosted reasoning model writes the same three
//! sections from the raw points.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{local_calendar, DayType, KinematicsReport, TimeOfDay};
use crate::remote::{with_retry, Attempted, RateLimiter, ReasonerClient, ReasonerRequest, RemoteError, RetryPolicy};
use crate::trajectory::TrajectorySegment;

pub const TEMPORAL_HEADER: &str = "1. Temporal Information";
pub const DYNAMICS_HEADER: &str = "2. Trajectory Dynamics";
pub const SUMMARY_HEADER: &str = "Overall Movement Pattern Summary";

/// Feature checklist the reasoner is asked to extract, in prompt order.
pub const PROMPT_FEATURES: [&str; 6] = [
    "start/end times",
    "duration",
    "inactivity periods",
    "speed profiles",
    "turn frequency",
    "detour index",
];

/// Inactivity periods listed by timestamp in the temporal block.
const LISTED_PERIODS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum NarrativeError {
    #[error("segment {segment_id} has {len} points, over the prompt cap of {cap}; downsample it first")]
    TooManyPoints {
        segment_id: String,
        len: usize,
        cap: usize,
    },
    #[error("invalid narrative config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSource {
    Deterministic,
    RemoteLlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneText {
    pub segment_id: String,
    pub temporal_block: String,
    pub dynamics_block: String,
    pub summary_block: String,
    pub source: TextSource,
    pub full_text: String,
    /// Set when a remote completion lacked the expected section headers.
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarrativeConfig {
    /// Upper bound (exclusive) of the "walking" speed band.
    pub walking_max_mps: f64,
    /// Upper bound (exclusive) of the "cycling or slow motorized" band.
    pub cycling_max_mps: f64,
    /// Upper bound (inclusive) of the "urban motorized" band.
    pub urban_max_mps: f64,
    /// Detour index above which the route reads as winding.
    pub winding_detour: f64,
    /// Detour index above which the route reads as somewhat indirect.
    pub indirect_detour: f64,
    /// Largest segment (in points) sent to the remote reasoner.
    pub prompt_point_cap: usize,
    pub local_utc_offset_h: f64,
}

impl Default for NarrativeConfig {
    fn default() -> Self {
        Self {
            walking_max_mps: 2.0,
            cycling_max_mps: 5.0,
            urban_max_mps: 12.0,
            winding_detour: 2.0,
            indirect_detour: 1.3,
            prompt_point_cap: 2000,
            local_utc_offset_h: 8.0,
        }
    }
}

impl NarrativeConfig {
    pub fn validate(&self) -> Result<(), NarrativeError> {
        if !(0.0 < self.walking_max_mps
            && self.walking_max_mps < self.cycling_max_mps
            && self.cycling_max_mps < self.urban_max_mps)
        {
            return Err(NarrativeError::Config("speed bands must be positive and increasing".into()));
        }
        if !(1.0 <= self.indirect_detour && self.indirect_detour <= self.winding_detour) {
            return Err(NarrativeError::Config("detour thresholds must satisfy 1 <= indirect <= winding".into()));
        }
        if self.prompt_point_cap < 2 {
            return Err(NarrativeError::Config("prompt_point_cap must be >= 2".into()));
        }
        Ok(())
    }

    pub fn speed_band_phrase(&self, avg_mps: f64) -> &'static str {
        if avg_mps < self.walking_max_mps {
            "consistent with walking"
        } else if avg_mps < self.cycling_max_mps {
            "consistent with cycling or slow motorized travel"
        } else if avg_mps <= self.urban_max_mps {
            "consistent with urban motorized travel"
        } else {
            "consistent with fast motorized or rail travel"
        }
    }
}

fn kmh(mps: f64) -> String {
    format!("{:.1}", mps * 3.6)
}

fn time_of_day_name(t: TimeOfDay) -> &'static str {
    match t {
        TimeOfDay::MorningPeak => "Morning peak",
        TimeOfDay::EveningPeak => "Evening peak",
        TimeOfDay::DaytimeOffpeak => "Daytime off-peak",
        TimeOfDay::Night => "Late evening/night",
    }
}

fn plural(n: usize, one: &str, many: &str) -> String {
    format!("{n} {}", if n == 1 { one } else { many })
}

fn offset_label(h: f64) -> String {
    if h.fract() == 0.0 {
        format!("UTC{:+}", h as i64)
    } else {
        format!("UTC{h:+}")
    }
}

/// Fills the three-section template. Rounding: speeds to 0.1 (km/h and
/// m/s), detour index to 0.1, distances to whole meters, durations to whole
/// seconds; timestamps print with one decimal.
pub fn render_narrative(report: &KinematicsReport, cfg: &NarrativeConfig) -> SceneText {
    let t = &report.temporal;
    let d = &report.dynamics;
    let offset = cfg.local_utc_offset_h;
    let (_, _, local_start) = local_calendar(t.start_ts, offset);
    let (_, _, local_end) = local_calendar(t.end_ts, offset);
    let (_, _, utc_start) = local_calendar(t.start_ts, 0.0);
    let (_, _, utc_end) = local_calendar(t.end_ts, 0.0);
    let zone = offset_label(offset);
    let day_word = match t.day_type {
        DayType::Weekday => "weekday",
        DayType::Weekend => "weekend",
    };
    let peak_phrase = if t.time_of_day.is_peak() {
        "within peak commuting hours"
    } else {
        "outside peak commuting hours"
    };

    let mut temporal = String::new();
    let _ = writeln!(temporal, "{TEMPORAL_HEADER}");
    let _ = writeln!(
        temporal,
        "Start/End Time: The trajectory spans from {:.1} ({} UTC; local time {} {zone}) to {:.1} ({} UTC; local time {} {zone}).",
        t.start_ts,
        utc_start.format("%Y-%m-%d %H:%M:%S"),
        local_start.format("%H:%M"),
        t.end_ts,
        utc_end.format("%Y-%m-%d %H:%M:%S"),
        local_end.format("%H:%M"),
    );
    let _ = writeln!(temporal, "Total Duration: {:.0} seconds.", t.duration_s);
    let _ = writeln!(
        temporal,
        "Day Type: Occurred on a {day_word} ({}, {} local).",
        local_start.format("%A"),
        local_start.format("%Y-%m-%d"),
    );
    let _ = writeln!(
        temporal,
        "Time of Day: {} (local start {}), {peak_phrase} (typically 7-9 AM and 5-7 PM local time).",
        time_of_day_name(t.time_of_day),
        local_start.format("%H:%M"),
    );
    if t.inactivity_periods.is_empty() {
        let _ = writeln!(temporal, "Inactivity Periods: none detected.");
    } else {
        let listed: Vec<String> = t
            .inactivity_periods
            .iter()
            .take(LISTED_PERIODS)
            .map(|p| format!("{:.1}-{:.1}, {:.0} s", p.start_ts, p.end_ts, p.duration_s))
            .collect();
        let _ = writeln!(
            temporal,
            "Inactivity Periods: {} detected (e.g., {}).",
            plural(t.inactivity_periods.len(), "stationary period", "stationary periods"),
            listed.join("; ")
        );
    }
    temporal.push('\n');

    let detour_text = match d.detour_index {
        Some(x) => format!("~{x:.1}"),
        None => "undefined".to_string(),
    };
    let mut dynamics = String::new();
    let _ = writeln!(dynamics, "{DYNAMICS_HEADER}");
    let _ = writeln!(
        dynamics,
        "Average Speed: {} km/h ({:.1} m/s), calculated as total travel distance ({:.0} meters) divided by total duration ({:.0} seconds).",
        kmh(d.avg_speed_mps),
        d.avg_speed_mps,
        d.path_length_m,
        t.duration_s
    );
    let _ = writeln!(
        dynamics,
        "Speed Variation: leg speeds range {}-{} km/h with standard deviation {} km/h.",
        kmh(d.speed_min_mps),
        kmh(d.speed_max_mps),
        kmh(d.speed_std_mps)
    );
    let _ = writeln!(
        dynamics,
        "Turn Frequency: {} (heading change of at least the sharp-turn threshold between consecutive legs).",
        plural(d.sharp_turn_count, "sharp turn", "sharp turns")
    );
    let _ = writeln!(
        dynamics,
        "Stops: {} and {}.",
        plural(d.brief_stop_count, "brief stationary period", "brief stationary periods"),
        plural(d.prolonged_stop_count, "prolonged stop", "prolonged stops"),
    );
    let _ = writeln!(
        dynamics,
        "Total vs. Straight-Line Distance: Total travel distance {:.0} meters; straight-line distance {:.0} meters.",
        d.path_length_m, d.straight_line_m
    );
    let detour_reading = match d.detour_index {
        Some(x) if x > cfg.winding_detour => ", indicating a moderately winding route or detour",
        Some(x) if x > cfg.indirect_detour => ", indicating a somewhat indirect route",
        Some(_) => ", indicating a nearly direct route",
        None => ", because the trajectory ends where it started",
    };
    let _ = writeln!(
        dynamics,
        "Detour Index: {detour_text} (actual path length/straight-line distance){detour_reading}."
    );
    dynamics.push('\n');

    let mut summary = String::new();
    let _ = writeln!(summary, "{SUMMARY_HEADER}");
    let mut sentences = vec![
        format!(
            "This trajectory reflects a {:.0}-second {day_word} trip during the {} period, {peak_phrase}.",
            t.duration_s,
            time_of_day_name(t.time_of_day).to_lowercase()
        ),
        format!(
            "The average speed of {} km/h is {}.",
            kmh(d.avg_speed_mps),
            cfg.speed_band_phrase(d.avg_speed_mps)
        ),
    ];
    if d.prolonged_stop_count > 0 {
        sentences.push(format!(
            "The movement includes {} longer than the prolonged-stop threshold, suggesting scheduled halts or waiting.",
            plural(d.prolonged_stop_count, "prolonged stop", "prolonged stops")
        ));
    } else if d.brief_stop_count > 0 {
        sentences.push("Brief stops likely reflect momentary pauses or GPS noise.".to_string());
    }
    sentences.push(match d.detour_index {
        Some(x) if x > cfg.winding_detour => {
            format!("The path is a moderately winding route or detour (detour index {detour_text}).")
        }
        Some(x) if x > cfg.indirect_detour => {
            format!("The path is somewhat indirect (detour index {detour_text}).")
        }
        Some(_) => format!("The path is nearly direct (detour index {detour_text})."),
        None => "The path returns to its starting point, so no detour index is defined.".to_string(),
    });
    let _ = writeln!(summary, "{}", sentences.join(" "));

    let full_text = format!("{temporal}{dynamics}{summary}");
    SceneText {
        segment_id: report.segment_id.clone(),
        temporal_block: temporal,
        dynamics_block: dynamics,
        summary_block: summary,
        source: TextSource::Deterministic,
        full_text,
        degraded: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerPrompt {
    pub system_text: String,
    pub user_text: String,
}

const SYSTEM_TEXT: &str = "You are a transportation analyst. You read raw GPS trajectories and \
describe their timing and movement dynamics precisely, using only the data provided.";

/// Builds the deterministic prompt for one segment. Points are listed as
/// `(lon, lat, ts)` triples in order.
pub fn build_prompt(seg: &TrajectorySegment, point_cap: usize) -> Result<ReasonerPrompt, NarrativeError> {
    if seg.len() > point_cap {
        return Err(NarrativeError::TooManyPoints {
            segment_id: seg.id().to_string(),
            len: seg.len(),
            cap: point_cap,
        });
    }
    let mut user = String::new();
    user.push_str(
        "Analyze the GPS trajectory segment below. Each point is a (lon, lat, ts) triple, \
with lon/lat in WGS84 degrees and ts in Unix seconds (UTC).\n\n",
    );
    user.push_str("Extract the following features:\n");
    for f in PROMPT_FEATURES {
        let _ = writeln!(user, "- {f}");
    }
    let _ = writeln!(
        user,
        "\nReport them in exactly three sections with these headings, in this order:\n\"{TEMPORAL_HEADER}\" (start/end times, duration, day type, time of day, inactivity periods),\n\"{DYNAMICS_HEADER}\" (average speed, speed variation, turn frequency, stops, total vs. straight-line distance, detour index),\n\"{SUMMARY_HEADER}\" (a short synthesis of the overall movement pattern and temporal characteristics)."
    );
    let _ = writeln!(user, "\nPoints ({}):", seg.len());
    for p in seg.points() {
        let _ = writeln!(user, "({}, {}, {})", p.lon, p.lat, p.ts);
    }
    Ok(ReasonerPrompt {
        system_text: SYSTEM_TEXT.to_string(),
        user_text: user,
    })
}

/// Splits a completion into the three sections. Text before the first
/// heading is discarded; `None` if any heading is missing or out of order.
pub fn split_sections(text: &str) -> Option<(String, String, String)> {
    let a = text.find(TEMPORAL_HEADER)?;
    let b = a + text[a..].find(DYNAMICS_HEADER)?;
    let c = b + text[b..].find(SUMMARY_HEADER)?;
    Some((
        text[a..b].to_string(),
        text[b..c].to_string(),
        text[c..].to_string(),
    ))
}

/// Sends the prompt to a hosted reasoner and wraps the answer.
///
/// A completion without the three headings is kept verbatim in `full_text`
/// with empty blocks and `degraded` set; it is never replaced by template text.
pub fn remote_narrative(
    segment_id: &str,
    prompt: &ReasonerPrompt,
    model_id: &str,
    client: &dyn ReasonerClient,
    policy: &RetryPolicy,
    limiter: Option<&RateLimiter>,
) -> Result<Attempted<SceneText>, RemoteError> {
    let request = ReasonerRequest {
        model: model_id.to_string(),
        system_text: prompt.system_text.clone(),
        user_text: prompt.user_text.clone(),
    };
    let Attempted { value: completion, attempts } =
        with_retry(policy, limiter, || client.complete(&request))?;
    let text = match split_sections(&completion) {
        Some((temporal_block, dynamics_block, summary_block)) => SceneText {
            segment_id: segment_id.to_string(),
            full_text: format!("{temporal_block}{dynamics_block}{summary_block}"),
            temporal_block,
            dynamics_block,
            summary_block,
            source: TextSource::RemoteLlm,
            degraded: false,
        },
        None => {
            tracing::warn!(segment_id, "remote narrative lacks section headers");
            SceneText {
                segment_id: segment_id.to_string(),
                temporal_block: String::new(),
                dynamics_block: String::new(),
                summary_block: String::new(),
                source: TextSource::RemoteLlm,
                full_text: completion,
                degraded: true,
            }
        }
    };
    Ok(Attempted { value: text, attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{DynamicsInfo, InactivityPeriod, TemporalInfo};
    use crate::remote::CallError;
    use crate::trajectory::GpsPoint;
    use std::cell::Cell;
    use std::sync::Mutex;

    fn report(avg: f64, detour: Option<f64>, brief: usize, prolonged: usize) -> KinematicsReport {
        let periods = (0..brief + prolonged)
            .map(|i| {
                let s = 1_236_500_363.0 + 60.0 * i as f64;
                let dur = if i < brief { 3.0 } else { 30.0 };
                InactivityPeriod { start_ts: s, end_ts: s + dur, duration_s: dur }
            })
            .collect();
        KinematicsReport {
            segment_id: "s1".into(),
            temporal: TemporalInfo {
                start_ts: 1_236_500_298.0,
                end_ts: 1_236_500_943.0,
                duration_s: 645.0,
                day_type: DayType::Weekend,
                time_of_day: TimeOfDay::DaytimeOffpeak,
                inactivity_periods: periods,
            },
            dynamics: DynamicsInfo {
                avg_speed_mps: avg,
                speed_min_mps: 1.4,
                speed_max_mps: 8.1,
                speed_std_mps: 0.9,
                sharp_turn_count: 2,
                brief_stop_count: brief,
                prolonged_stop_count: prolonged,
                path_length_m: avg * 645.0,
                straight_line_m: detour.map_or(0.0, |d| avg * 645.0 / d),
                detour_index: detour,
            },
        }
    }

    #[test]
    fn sample_report() {
        let t = render_narrative(&report(3.1, Some(2.911), 2, 0), &NarrativeConfig::default());
        assert!(t.dynamics_block.contains("Detour Index: ~2.9"), "{}", t.dynamics_block);
        assert!(t.summary_block.contains("moderately winding route or detour"));
        assert!(t.summary_block.contains("consistent with cycling or slow motorized travel"));
        assert!(t.summary_block.contains("Brief stops"));
        assert_eq!(t.full_text, format!("{}{}{}", t.temporal_block, t.dynamics_block, t.summary_block));
        assert!(t.temporal_block.starts_with(TEMPORAL_HEADER));
        assert!(t.dynamics_block.starts_with(DYNAMICS_HEADER));
        assert!(t.summary_block.starts_with(SUMMARY_HEADER));
        assert_eq!(t.source, TextSource::Deterministic);
        assert!(t.temporal_block.contains("2009-03-08 08:18:18 UTC; local time 16:18 UTC+8"));
    }

    #[test]
    fn straight_two_point_report() {
        let t = render_narrative(&report(6.0, Some(1.0), 0, 0), &NarrativeConfig::default());
        assert!(t.dynamics_block.contains("Detour Index: ~1.0"));
        assert!(!t.summary_block.contains("stop"));
        assert!(t.temporal_block.contains("Inactivity Periods: none detected."));
    }

    #[test]
    fn prolonged_stop_mentioned() {
        let t = render_narrative(&report(7.0, Some(1.2), 0, 1), &NarrativeConfig::default());
        assert!(t.summary_block.contains("1 prolonged stop longer than"));
    }

    #[test]
    fn loop_has_no_detour() {
        let t = render_narrative(&report(7.0, None, 0, 0), &NarrativeConfig::default());
        assert!(t.dynamics_block.contains("Detour Index: undefined"));
        assert!(t.summary_block.contains("returns to its starting point"));
    }

    #[test]
    fn speed_bands() {
        let c = NarrativeConfig::default();
        assert_eq!(c.speed_band_phrase(1.99), "consistent with walking");
        assert_eq!(c.speed_band_phrase(2.0), "consistent with cycling or slow motorized travel");
        assert_eq!(c.speed_band_phrase(5.0), "consistent with urban motorized travel");
        assert_eq!(c.speed_band_phrase(12.0), "consistent with urban motorized travel");
        assert_eq!(c.speed_band_phrase(12.01), "consistent with fast motorized or rail travel");
        let bad = NarrativeConfig { cycling_max_mps: 1.0, ..c };
        assert!(bad.validate().is_err());
    }

    /// Pulls the number following `label` out of the narrative.
    fn number_after(text: &str, label: &str) -> f64 {
        let at = text.find(label).unwrap_or_else(|| panic!("{label} missing")) + label.len();
        let num: String = text[at..]
            .chars()
            .skip_while(|c| !c.is_ascii_digit())
            .take_while(|c| c.is_ascii_digit() || *c == '.')
            .collect();
        num.trim_end_matches('.').parse().unwrap()
    }

    #[test]
    fn printed_numbers_match_rounded_fields() {
        let r = report(3.137, Some(2.911), 2, 1);
        let t = render_narrative(&r, &NarrativeConfig::default()).full_text;
        let round1 = |x: f64| (x * 10.0).round() / 10.0;
        assert_eq!(number_after(&t, "Average Speed:"), round1(r.dynamics.avg_speed_mps * 3.6));
        assert_eq!(number_after(&t, "km/h ("), round1(r.dynamics.avg_speed_mps));
        assert_eq!(number_after(&t, "Total Duration:"), r.temporal.duration_s.round());
        assert_eq!(number_after(&t, "Total travel distance"), r.dynamics.path_length_m.round());
        assert_eq!(number_after(&t, "straight-line distance"), r.dynamics.straight_line_m.round());
        assert_eq!(number_after(&t, "Detour Index: ~"), round1(2.911));
        assert_eq!(number_after(&t, "Turn Frequency:"), 2.0);
        assert_eq!(number_after(&t, "Stops:"), 2.0);
        assert_eq!(number_after(&t, "brief stationary periods and"), 1.0);
        assert_eq!(number_after(&t, "range"), round1(1.4 * 3.6));
        assert_eq!(number_after(&t, "standard deviation"), round1(0.9 * 3.6));
        assert_eq!(number_after(&t, "spans from"), 1_236_500_298.0);
    }

    #[test]
    fn differing_fields_change_text() {
        let cfg = NarrativeConfig::default();
        let base = render_narrative(&report(3.1, Some(2.9), 1, 0), &cfg).full_text;
        let variants = [
            report(4.1, Some(2.9), 1, 0),
            report(3.1, Some(1.9), 1, 0),
            report(3.1, Some(2.9), 2, 0),
            report(3.1, Some(2.9), 1, 1),
            {
                let mut r = report(3.1, Some(2.9), 1, 0);
                r.dynamics.sharp_turn_count = 5;
                r
            },
            {
                let mut r = report(3.1, Some(2.9), 1, 0);
                r.temporal.time_of_day = TimeOfDay::Night;
                r
            },
        ];
        for v in variants {
            assert_ne!(render_narrative(&v, &cfg).full_text, base);
        }
    }

    fn seg(n: usize) -> TrajectorySegment {
        let pts = (0..n)
            .map(|i| GpsPoint::new(116.3 + i as f64 * 1e-4, 39.9, 1_000_000.0 + i as f64).unwrap())
            .collect();
        TrajectorySegment::new("p", pts, None).unwrap()
    }

    #[test]
    fn prompt_lists_points_and_features() {
        let s = seg(10);
        let p = build_prompt(&s, 2000).unwrap();
        for f in PROMPT_FEATURES {
            assert!(p.user_text.contains(&format!("- {f}\n")));
        }
        for pt in s.points() {
            let triple = format!("({}, {}, {})", pt.lon, pt.lat, pt.ts);
            assert_eq!(p.user_text.matches(&triple).count(), 1, "{triple}");
        }
        assert_eq!(p, build_prompt(&seg(10), 2000).unwrap());
    }

    #[test]
    fn prompt_cap_enforced() {
        assert!(build_prompt(&seg(2000), 2000).is_ok());
        assert!(matches!(
            build_prompt(&seg(2001), 2000),
            Err(NarrativeError::TooManyPoints { len: 2001, cap: 2000, .. })
        ));
    }

    struct Scripted {
        replies: Mutex<Vec<Result<String, CallError>>>,
        calls: Cell<u32>,
    }

    // Test-only: single-threaded use.
    unsafe impl Sync for Scripted {}

    impl ReasonerClient for Scripted {
        fn complete(&self, _req: &ReasonerRequest) -> Result<String, CallError> {
            self.calls.set(self.calls.get() + 1);
            self.replies.lock().unwrap().remove(0)
        }
    }

    fn scripted(replies: Vec<Result<String, CallError>>) -> Scripted {
        Scripted { replies: Mutex::new(replies), calls: Cell::new(0) }
    }

    #[test]
    fn remote_completion_parsed_into_blocks() {
        let deterministic = render_narrative(&report(3.1, Some(2.9), 1, 0), &NarrativeConfig::default());
        let completion = format!("<think>reasoning</think>\n**{}", deterministic.full_text);
        let client = scripted(vec![Ok(completion)]);
        let prompt = build_prompt(&seg(5), 2000).unwrap();
        let out = remote_narrative("s1", &prompt, "m", &client, &RetryPolicy::immediate(2), None).unwrap();
        assert_eq!(out.attempts, 1);
        let t = out.value;
        assert_eq!(t.source, TextSource::RemoteLlm);
        assert!(!t.degraded);
        assert_eq!(t.temporal_block, deterministic.temporal_block);
        assert_eq!(t.summary_block, deterministic.summary_block);
    }

    #[test]
    fn headerless_completion_is_degraded() {
        let client = scripted(vec![Ok("It was probably a bus.".into())]);
        let prompt = build_prompt(&seg(5), 2000).unwrap();
        let t = remote_narrative("s1", &prompt, "m", &client, &RetryPolicy::immediate(2), None)
            .unwrap()
            .value;
        assert!(t.degraded);
        assert_eq!(t.full_text, "It was probably a bus.");
        assert!(t.temporal_block.is_empty() && t.dynamics_block.is_empty() && t.summary_block.is_empty());
    }

    #[test]
    fn timeout_reports_attempts() {
        let client = scripted(vec![Err(CallError::Timeout), Err(CallError::Timeout), Err(CallError::Timeout)]);
        let prompt = build_prompt(&seg(5), 2000).unwrap();
        let err = remote_narrative("s1", &prompt, "m", &client, &RetryPolicy::immediate(2), None).unwrap_err();
        assert_eq!(err, RemoteError::Timeout { attempts: 3 });
        assert_eq!(client.calls.get(), 3);
    }
}
