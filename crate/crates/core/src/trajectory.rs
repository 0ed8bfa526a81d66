//! Trajectory data model and GeoLife on-disk formats.
//!
//! A [`GpsPoint`] is `(lon, lat, ts)`; a [`TrajectorySegment`] is a
//! chronologically ordered run of at least two points, optionally labeled
//! with one of the five travel modes in [`Mode`].

use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of header lines preceding the records of a PLT file.
pub const PLT_HEADER_LINES: usize = 6;

const PLT_HEADER: [&str; PLT_HEADER_LINES] = [
    "Geolife trajectory",
    "WGS 84",
    "Altitude is in Feet",
    "Reserved 3",
    "0,2,255,My Track,0,0,2,8421376",
    "0",
];

/// Day zero of the fractional-day PLT column (1899-12-30) as Unix seconds.
const PLT_DAY_ZERO_UNIX: f64 = -2_209_161_600.0;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("timestamp {0} is not a finite non-negative number")]
    InvalidTimestamp(f64),
    #[error("segment {id} has {len} points, at least 2 are required")]
    TooFewPoints { id: String, len: usize },
    #[error("segment {id}: timestamps not strictly increasing at point {index}")]
    NonMonotonic { id: String, index: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("PLT file has only {found} header lines, expected {PLT_HEADER_LINES}")]
    MissingHeader { found: usize },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: interval ends ({end}) before it starts ({start})")]
    Interval { line: usize, start: f64, end: f64 },
    #[error("input is not valid UTF-8")]
    Encoding,
}

/// One GPS fix: WGS84 degrees and Unix seconds (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct GpsPoint {
    pub lon: f64,
    pub lat: f64,
    pub ts: f64,
}

impl GpsPoint {
    pub fn new(lon: f64, lat: f64, ts: f64) -> Result<Self, TrajectoryError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(TrajectoryError::LatitudeOutOfRange(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(TrajectoryError::LongitudeOutOfRange(lon));
        }
        if !ts.is_finite() || ts < 0.0 {
            return Err(TrajectoryError::InvalidTimestamp(ts));
        }
        Ok(Self { lon, lat, ts })
    }
}

impl TryFrom<[f64; 3]> for GpsPoint {
    type Error = TrajectoryError;

    fn try_from([lon, lat, ts]: [f64; 3]) -> Result<Self, Self::Error> {
        GpsPoint::new(lon, lat, ts)
    }
}

impl From<GpsPoint> for [f64; 3] {
    fn from(p: GpsPoint) -> Self {
        [p.lon, p.lat, p.ts]
    }
}

/// The five travel modes a segment can be labeled with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Walk,
    Bike,
    Bus,
    Car,
    Subway,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Walk, Mode::Bike, Mode::Bus, Mode::Car, Mode::Subway];
    pub const COUNT: usize = 5;

    /// Position of this mode in [`Mode::ALL`]; also the classifier's output index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Mode> {
        Mode::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Walk => "walk",
            Mode::Bike => "bike",
            Mode::Bus => "bus",
            Mode::Car => "car",
            Mode::Subway => "subway",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_mode(s).ok_or_else(|| format!("unknown travel mode `{s}`"))
    }
}

/// Maps a raw GeoLife label onto one of the five modes, case-insensitively.
///
/// Labels outside the vocabulary (`train`, `taxi`, `airplane`, ...) map to
/// `None`; in particular `taxi` is not folded into `car`.
///
/// ```
/// use trajscene::trajectory::{normalize_mode, Mode};
/// assert_eq!(normalize_mode("Bus"), Some(Mode::Bus));
/// assert_eq!(normalize_mode("train"), None);
/// ```
pub fn normalize_mode(raw: &str) -> Option<Mode> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "walk" => Some(Mode::Walk),
        "bike" => Some(Mode::Bike),
        "bus" => Some(Mode::Bus),
        "car" => Some(Mode::Car),
        "subway" => Some(Mode::Subway),
        _ => None,
    }
}

/// One row of a GeoLife `labels.txt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelInterval {
    pub start_ts: f64,
    pub end_ts: f64,
    pub raw_mode: String,
}

impl LabelInterval {
    pub fn duration_s(&self) -> f64 {
        self.end_ts - self.start_ts
    }

    pub fn contains(&self, ts: f64) -> bool {
        ts >= self.start_ts && ts <= self.end_ts
    }
}

/// A chronologically ordered sequence of at least two points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SegmentRecord", into = "SegmentRecord")]
pub struct TrajectorySegment {
    id: String,
    points: Vec<GpsPoint>,
    mode: Option<Mode>,
}

/// Interchange record for one segment (one JSON object per line).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SegmentRecord {
    segment_id: String,
    mode: Option<Mode>,
    points: Vec<GpsPoint>,
}

impl TryFrom<SegmentRecord> for TrajectorySegment {
    type Error = TrajectoryError;

    fn try_from(r: SegmentRecord) -> Result<Self, Self::Error> {
        TrajectorySegment::new(r.segment_id, r.points, r.mode)
    }
}

impl From<TrajectorySegment> for SegmentRecord {
    fn from(s: TrajectorySegment) -> Self {
        SegmentRecord {
            segment_id: s.id,
            mode: s.mode,
            points: s.points,
        }
    }
}

impl TrajectorySegment {
    pub fn new(
        id: impl Into<String>,
        points: Vec<GpsPoint>,
        mode: Option<Mode>,
    ) -> Result<Self, TrajectoryError> {
        let id = id.into();
        if points.len() < 2 {
            return Err(TrajectoryError::TooFewPoints {
                id,
                len: points.len(),
            });
        }
        if let Some(index) = points.windows(2).position(|w| w[1].ts <= w[0].ts) {
            return Err(TrajectoryError::NonMonotonic { id, index: index + 1 });
        }
        Ok(Self { id, points, mode })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[GpsPoint] {
        &self.points
    }

    pub fn mode(&self) -> Option<Mode> {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> &GpsPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &GpsPoint {
        &self.points[self.points.len() - 1]
    }

    pub fn start_ts(&self) -> f64 {
        self.first().ts
    }

    pub fn end_ts(&self) -> f64 {
        self.last().ts
    }

    pub fn duration_s(&self) -> f64 {
        self.end_ts() - self.start_ts()
    }
}

fn line_err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Line {
        line,
        message: message.into(),
    }
}

fn to_unix(dt: NaiveDateTime) -> f64 {
    dt.and_utc().timestamp() as f64
}

/// Parses a GeoLife `.plt` file. Line numbers in errors are 1-based and
/// count the header.
pub fn parse_plt(bytes: &[u8]) -> Result<Vec<GpsPoint>, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ParseError::Encoding)?;
    let mut lines = text.lines();
    for found in 0..PLT_HEADER_LINES {
        if lines.next().is_none() {
            return Err(ParseError::MissingHeader { found });
        }
    }

    let mut points = Vec::new();
    for (i, raw) in lines.enumerate() {
        let line = i + PLT_HEADER_LINES + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() < 7 {
            return Err(line_err(
                line,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let lat: f64 = fields[0]
            .parse()
            .map_err(|_| line_err(line, format!("bad latitude `{}`", fields[0])))?;
        let lon: f64 = fields[1]
            .parse()
            .map_err(|_| line_err(line, format!("bad longitude `{}`", fields[1])))?;
        let date = NaiveDate::parse_from_str(fields[5], "%Y-%m-%d")
            .map_err(|_| line_err(line, format!("bad date `{}`", fields[5])))?;
        let time = NaiveTime::parse_from_str(fields[6], "%H:%M:%S")
            .map_err(|_| line_err(line, format!("bad time `{}`", fields[6])))?;
        let ts = to_unix(date.and_time(time));
        let point = GpsPoint::new(lon, lat, ts).map_err(|e| line_err(line, e.to_string()))?;
        points.push(point);
    }
    Ok(points)
}

/// Serializes points as a PLT file. Coordinates use the shortest
/// round-tripping decimal form; timestamps are truncated to whole seconds.
pub fn write_plt(points: &[GpsPoint]) -> String {
    let mut out = String::new();
    for h in PLT_HEADER {
        out.push_str(h);
        out.push_str("\r\n");
    }
    for p in points {
        let secs = p.ts.floor() as i64;
        let dt = chrono::DateTime::from_timestamp(secs, 0)
            .expect("timestamp within chrono range")
            .naive_utc();
        let days = (p.ts - PLT_DAY_ZERO_UNIX) / 86_400.0;
        out.push_str(&format!(
            "{},{},0,-777,{:.10},{},{}\r\n",
            p.lat,
            p.lon,
            days,
            dt.format("%Y-%m-%d"),
            dt.format("%H:%M:%S"),
        ));
    }
    out
}

/// Parses a GeoLife `labels.txt` (one header line, then tab-separated rows).
pub fn parse_labels(bytes: &[u8]) -> Result<Vec<LabelInterval>, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ParseError::Encoding)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate().skip(1) {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() < 3 {
            return Err(line_err(
                line,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let parse_ts = |s: &str| {
            NaiveDateTime::parse_from_str(s.trim(), "%Y/%m/%d %H:%M:%S")
                .map(to_unix)
                .map_err(|_| line_err(line, format!("bad timestamp `{}`", s.trim())))
        };
        let start_ts = parse_ts(fields[0])?;
        let end_ts = parse_ts(fields[1])?;
        if end_ts < start_ts {
            return Err(ParseError::Interval {
                line,
                start: start_ts,
                end: end_ts,
            });
        }
        out.push(LabelInterval {
            start_ts,
            end_ts,
            raw_mode: fields[2].trim().to_string(),
        });
    }
    Ok(out)
}

/// Serializes label intervals in GeoLife `labels.txt` layout.
pub fn write_labels(labels: &[LabelInterval]) -> String {
    let fmt_ts = |ts: f64| {
        chrono::DateTime::from_timestamp(ts.floor() as i64, 0)
            .expect("timestamp within chrono range")
            .naive_utc()
            .format("%Y/%m/%d %H:%M:%S")
            .to_string()
    };
    let mut out = String::from("Start Time\tEnd Time\tTransportation Mode\r\n");
    for l in labels {
        out.push_str(&format!(
            "{}\t{}\t{}\r\n",
            fmt_ts(l.start_ts),
            fmt_ts(l.end_ts),
            l.raw_mode
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Days since 1970-01-01 for a proleptic Gregorian date.
    fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
        let y = if m <= 2 { y - 1 } else { y };
        let era = if y >= 0 { y } else { y - 399 } / 400;
        let yoe = y - era * 400;
        let mp = (m + 9) % 12;
        let doy = (153 * mp + 2) / 5 + d - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146_097 + doe - 719_468
    }

    fn header() -> String {
        write_plt(&[])
    }

    #[test]
    fn calendar_oracle_matches_frozen_value() {
        let secs = days_from_civil(2008, 10, 23) * 86_400 + 2 * 3600 + 53 * 60 + 4;
        assert_eq!(secs, 1_224_730_384);
    }

    #[test]
    fn parses_geolife_record() {
        let text = format!(
            "{}39.984702,116.318417,0,492,39744.1201851852,2008-10-23,02:53:04\n",
            header()
        );
        let pts = parse_plt(text.as_bytes()).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].lat, 39.984702);
        assert_eq!(pts[0].lon, 116.318417);
        assert_eq!(pts[0].ts, 1_224_730_384.0);
    }

    #[test]
    fn header_only_plt_is_empty() {
        assert!(parse_plt(header().as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn short_header_is_format_error() {
        let err = parse_plt(b"Geolife trajectory\nWGS 84\n").unwrap_err();
        assert_eq!(err, ParseError::MissingHeader { found: 2 });
    }

    #[test]
    fn out_of_range_latitude_names_line() {
        let text = format!(
            "{}39.9,116.3,0,0,39744.1,2008-10-23,02:53:04\n95.0,116.3,0,0,39744.1,2008-10-23,02:53:05\n",
            header()
        );
        match parse_plt(text.as_bytes()).unwrap_err() {
            ParseError::Line { line, message } => {
                assert_eq!(line, 8);
                assert!(message.contains("latitude"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_fields_and_bad_numbers() {
        let text = format!("{}39.9,116.3,0\n", header());
        assert!(matches!(
            parse_plt(text.as_bytes()),
            Err(ParseError::Line { line: 7, .. })
        ));
        let text = format!("{}abc,116.3,0,0,1,2008-10-23,02:53:04\n", header());
        assert!(matches!(
            parse_plt(text.as_bytes()),
            Err(ParseError::Line { line: 7, .. })
        ));
    }

    #[test]
    fn day_fraction_column_agrees_with_timestamp() {
        let p = GpsPoint::new(116.318417, 39.984702, 1_224_730_384.0).unwrap();
        let text = write_plt(&[p]);
        let record = text.lines().nth(6).unwrap();
        let days: f64 = record.split(',').nth(4).unwrap().parse().unwrap();
        assert!((days - 39744.1201851852).abs() < 1e-9);
    }

    #[test]
    fn parses_labels() {
        let text = "Start Time\tEnd Time\tTransportation Mode\n2008/10/23 02:53:04\t2008/10/23 03:10:00\twalk\n";
        let labels = parse_labels(text.as_bytes()).unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].raw_mode, "walk");
        assert_eq!(labels[0].start_ts, 1_224_730_384.0);
        assert_eq!(labels[0].duration_s(), 1016.0);
    }

    #[test]
    fn header_only_labels_and_reversed_interval() {
        assert!(parse_labels(b"Start Time\tEnd Time\tTransportation Mode\n")
            .unwrap()
            .is_empty());
        let text = "h\n2008/10/23 03:10:00\t2008/10/23 02:53:04\tbus\n";
        assert!(matches!(
            parse_labels(text.as_bytes()),
            Err(ParseError::Interval { line: 2, .. })
        ));
        let text = "h\n2008-10-23\t2008/10/23 02:53:04\tbus\n";
        assert!(matches!(
            parse_labels(text.as_bytes()),
            Err(ParseError::Line { line: 2, .. })
        ));
    }

    #[test]
    fn labels_round_trip() {
        let labels = vec![LabelInterval {
            start_ts: 1_224_730_384.0,
            end_ts: 1_224_731_400.0,
            raw_mode: "taxi".into(),
        }];
        assert_eq!(parse_labels(write_labels(&labels).as_bytes()).unwrap(), labels);
    }

    #[test]
    fn normalize_mode_vocabulary() {
        assert_eq!(normalize_mode("Bus"), Some(Mode::Bus));
        assert_eq!(normalize_mode("SUBWAY"), Some(Mode::Subway));
        assert_eq!(normalize_mode("train"), None);
        assert_eq!(normalize_mode("taxi"), None);
        for m in Mode::ALL {
            assert_eq!(normalize_mode(m.as_str()), Some(m));
            assert_eq!(Mode::from_index(m.index()), Some(m));
        }
    }

    #[test]
    fn segment_invariants() {
        let p = |ts| GpsPoint::new(116.0, 39.0, ts).unwrap();
        assert!(matches!(
            TrajectorySegment::new("a", vec![p(1.0)], None),
            Err(TrajectoryError::TooFewPoints { .. })
        ));
        assert!(matches!(
            TrajectorySegment::new("a", vec![p(1.0), p(1.0)], None),
            Err(TrajectoryError::NonMonotonic { index: 1, .. })
        ));
        let seg = TrajectorySegment::new("a", vec![p(1.0), p(3.5)], Some(Mode::Car)).unwrap();
        assert_eq!(seg.duration_s(), 2.5);
    }

    #[test]
    fn segment_json_record_validates() {
        let json = r#"{"segment_id":"s1","mode":"bus","points":[[116.0,39.0,10.0],[116.1,39.0,20.0]]}"#;
        let seg: TrajectorySegment = serde_json::from_str(json).unwrap();
        assert_eq!(seg.mode(), Some(Mode::Bus));
        assert_eq!(serde_json::to_string(&seg).unwrap(), json);
        let bad = r#"{"segment_id":"s1","mode":null,"points":[[116.0,39.0,20.0],[116.1,39.0,10.0]]}"#;
        assert!(serde_json::from_str::<TrajectorySegment>(bad).is_err());
        let bad = r#"{"segment_id":"s1","mode":null,"points":[[116.0,99.0,10.0],[116.1,39.0,20.0]]}"#;
        assert!(serde_json::from_str::<TrajectorySegment>(bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn point() -> impl Strategy<Value = GpsPoint> {
            (-180.0f64..=180.0, -90.0f64..=90.0, 0u32..2_000_000_000)
                .prop_map(|(lon, lat, ts)| GpsPoint::new(lon, lat, ts as f64).unwrap())
        }

        proptest! {
            #[test]
            fn plt_round_trip_is_lossless(points in prop::collection::vec(point(), 0..40)) {
                let parsed = parse_plt(write_plt(&points).as_bytes()).unwrap();
                prop_assert_eq!(parsed, points);
            }

            #[test]
            fn normalize_is_absent_outside_vocabulary(s in "[a-zA-Z]{0,10}") {
                let known = ["walk", "bike", "bus", "car", "subway"];
                let lower = s.to_ascii_lowercase();
                match normalize_mode(&s) {
                    Some(m) => {
                        prop_assert_eq!(m.as_str(), lower.as_str());
                        prop_assert_eq!(normalize_mode(m.as_str()), Some(m));
                    }
                    None => prop_assert!(!known.contains(&lower.as_str())),
                }
            }
        }
    }
}
