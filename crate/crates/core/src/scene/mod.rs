//! Map scenes: OSM ingestion, layer extraction and deterministic rendering.

pub mod layers;
pub mod osm;
pub mod render;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::TrajectorySegment;

pub use layers::{extract_layers, SceneLayers};
pub use osm::{parse_osm_xml, OsmError, OsmExtract};
pub use render::{render_scene, RenderStyle, SceneImage, SceneSidecar, STYLE_VERSION};

/// Smallest extent, in degrees, of a scene axis before buffering.
pub const MIN_EXTENT_DEG: f64 = 0.001;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("buffer fraction must be finite and > 0, got {0}")]
    InvalidBuffer(f64),
    #[error("bounding box has zero area: {0:?}")]
    ZeroArea(BBox),
    #[error("invalid render style: {0}")]
    Style(String),
    #[error("scene sidecar missing for segment {0}")]
    MissingSidecar(String),
    #[error("raster export failed: {0}")]
    Raster(String),
}

/// Axis-aligned lon/lat box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.max_lon - self.min_lon
    }

    pub fn height(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.min_lon && lon <= self.max_lon && lat >= self.min_lat && lat <= self.max_lat
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        self.min_lon <= other.min_lon
            && self.min_lat <= other.min_lat
            && self.max_lon >= other.max_lon
            && self.max_lat >= other.max_lat
    }

    /// Tight box around a segment's points.
    pub fn of_segment(seg: &TrajectorySegment) -> BBox {
        let mut b = BBox {
            min_lon: f64::INFINITY,
            min_lat: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            max_lat: f64::NEG_INFINITY,
        };
        for p in seg.points() {
            b.min_lon = b.min_lon.min(p.lon);
            b.min_lat = b.min_lat.min(p.lat);
            b.max_lon = b.max_lon.max(p.lon);
            b.max_lat = b.max_lat.max(p.lat);
        }
        b
    }
}

/// The segment's extent grown by `buffer_frac` of its width/height on each
/// side. Axes narrower than [`MIN_EXTENT_DEG`] are first widened to it,
/// symmetrically about their center.
///
/// ```
/// # use trajscene::scene::{BBox, scene_bbox};
/// # use trajscene::trajectory::{GpsPoint, TrajectorySegment};
/// let seg = TrajectorySegment::new("s", vec![
///     GpsPoint::new(116.30, 39.90, 0.0).unwrap(),
///     GpsPoint::new(116.40, 40.00, 60.0).unwrap(),
/// ], None).unwrap();
/// let b = scene_bbox(&seg, 0.2).unwrap();
/// assert!((b.min_lon - 116.28).abs() < 1e-9 && (b.max_lat - 40.02).abs() < 1e-9);
/// ```
pub fn scene_bbox(seg: &TrajectorySegment, buffer_frac: f64) -> Result<BBox, SceneError> {
    if !buffer_frac.is_finite() || buffer_frac <= 0.0 {
        return Err(SceneError::InvalidBuffer(buffer_frac));
    }
    let mut b = BBox::of_segment(seg);
    if b.width() < MIN_EXTENT_DEG {
        let c = (b.min_lon + b.max_lon) / 2.0;
        b.min_lon = c - MIN_EXTENT_DEG / 2.0;
        b.max_lon = c + MIN_EXTENT_DEG / 2.0;
    }
    if b.height() < MIN_EXTENT_DEG {
        let c = (b.min_lat + b.max_lat) / 2.0;
        b.min_lat = c - MIN_EXTENT_DEG / 2.0;
        b.max_lat = c + MIN_EXTENT_DEG / 2.0;
    }
    let (dx, dy) = (b.width() * buffer_frac, b.height() * buffer_frac);
    Ok(BBox {
        min_lon: (b.min_lon - dx).max(-180.0),
        min_lat: (b.min_lat - dy).max(-90.0),
        max_lon: (b.max_lon + dx).min(180.0),
        max_lat: (b.max_lat + dy).min(90.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::GpsPoint;
    use proptest::prelude::*;

    fn seg(pts: &[(f64, f64)]) -> TrajectorySegment {
        let pts = pts
            .iter()
            .enumerate()
            .map(|(i, &(lon, lat))| GpsPoint::new(lon, lat, i as f64).unwrap())
            .collect();
        TrajectorySegment::new("s", pts, None).unwrap()
    }

    #[test]
    fn buffered_extent() {
        let b = scene_bbox(&seg(&[(116.30, 39.90), (116.40, 40.00), (116.35, 39.95)]), 0.2).unwrap();
        assert!((b.min_lon - 116.28).abs() < 1e-9);
        assert!((b.max_lon - 116.42).abs() < 1e-9);
        assert!((b.min_lat - 39.88).abs() < 1e-9);
        assert!((b.max_lat - 40.02).abs() < 1e-9);
    }

    #[test]
    fn degenerate_extent_widened() {
        let b = scene_bbox(&seg(&[(116.3, 39.9), (116.3, 39.9)]), 0.2).unwrap();
        assert!(b.width() >= MIN_EXTENT_DEG && b.height() >= MIN_EXTENT_DEG);
        assert!(b.contains(116.3, 39.9));
        let b = scene_bbox(&seg(&[(116.3, 39.9), (116.4, 39.9)]), 0.2).unwrap();
        assert!(b.height() >= MIN_EXTENT_DEG);
    }

    #[test]
    fn zero_or_negative_buffer_rejected() {
        let s = seg(&[(116.3, 39.9), (116.4, 40.0)]);
        assert_eq!(scene_bbox(&s, 0.0), Err(SceneError::InvalidBuffer(0.0)));
        assert!(scene_bbox(&s, -0.1).is_err());
        assert!(scene_bbox(&s, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn larger_buffer_is_superset(
            pts in prop::collection::vec((116.0f64..116.5, 39.7f64..40.2), 2..20),
            f1 in 0.01f64..1.0,
            extra in 0.0f64..1.0,
        ) {
            let s = seg(&pts);
            let small = scene_bbox(&s, f1).unwrap();
            let large = scene_bbox(&s, f1 + extra).unwrap();
            prop_assert!(large.contains_box(&small));
            let tight = BBox::of_segment(&s);
            prop_assert!(small.min_lon < tight.min_lon && small.max_lon > tight.max_lon);
            prop_assert!(small.min_lat < tight.min_lat && small.max_lat > tight.max_lat);
        }
    }
}
