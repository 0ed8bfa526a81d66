//! Spherical-Earth geometry.

use crate::trajectory::GpsPoint;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two points (haversine form).
///
/// ```
/// use trajscene::geo::haversine_m;
/// use trajscene::trajectory::GpsPoint;
/// let a = GpsPoint::new(0.0, 0.0, 0.0).unwrap();
/// let b = GpsPoint::new(1.0, 0.0, 0.0).unwrap();
/// assert!((haversine_m(&a, &b) - 111_194.93).abs() < 0.01);
/// ```
pub fn haversine_m(a: &GpsPoint, b: &GpsPoint) -> f64 {
    haversine_deg(a.lat, a.lon, b.lat, b.lon)
}

/// Haversine distance on raw `(lat, lon)` degrees.
pub fn haversine_deg(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (lon2 - lon1).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Initial bearing from `a` towards `b`, degrees clockwise from north in `[0, 360)`.
pub fn initial_bearing_deg(a: &GpsPoint, b: &GpsPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlambda = (b.lon - a.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    y.atan2(x).to_degrees().rem_euclid(360.0)
}

/// Absolute heading change between two bearings, folded into `[0, 180]`.
pub fn heading_change_deg(b1: f64, b2: f64) -> f64 {
    let d = (b2 - b1).abs().rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Local equirectangular frame (meters east/north of an origin).
///
/// Accurate to well under a meter over city-sized extents; used for
/// point-to-polyline distances and synthetic geometry, never for the
/// reported trajectory distances.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    pub origin_lat: f64,
    pub origin_lon: f64,
    cos_lat: f64,
}

impl LocalFrame {
    pub fn new(origin_lat: f64, origin_lon: f64) -> Self {
        Self {
            origin_lat,
            origin_lon,
            cos_lat: origin_lat.to_radians().cos(),
        }
    }

    /// `(lat, lon)` degrees to `(east, north)` meters.
    pub fn to_xy(&self, lat: f64, lon: f64) -> (f64, f64) {
        let k = EARTH_RADIUS_M.to_radians();
        (
            (lon - self.origin_lon) * k * self.cos_lat,
            (lat - self.origin_lat) * k,
        )
    }

    /// `(east, north)` meters to `(lat, lon)` degrees.
    pub fn to_latlon(&self, x: f64, y: f64) -> (f64, f64) {
        let k = EARTH_RADIUS_M.to_radians();
        (
            self.origin_lat + y / k,
            self.origin_lon + x / (k * self.cos_lat),
        )
    }
}

/// Euclidean distance from `p` to the segment `a`–`b` in a planar frame.
pub fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Distance from `p` to the nearest vertex-to-vertex piece of `line`.
pub fn point_polyline_distance(p: (f64, f64), line: &[(f64, f64)]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [only] => ((p.0 - only.0).powi(2) + (p.1 - only.1).powi(2)).sqrt(),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}
