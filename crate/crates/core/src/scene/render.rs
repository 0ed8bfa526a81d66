//! Deterministic scene rendering.
//!
//! The scene box is mapped onto the canvas with an equirectangular
//! projection: one pixel spans the same ground distance on both axes
//! (longitude is scaled by `cos(mid_lat)`), and the drawing is centered,
//! so the box touches two opposite canvas edges and is letterboxed on the
//! other axis. Geometry is drawn in a fixed order so the trajectory always
//! ends up on top.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{LonLat, SceneLayers};
use super::{BBox, SceneError};
use crate::trajectory::TrajectorySegment;

pub const STYLE_VERSION: &str = "trajscene-style/1";

pub const BACKGROUND: &str = "#ffffff";
pub const ROAD_COLOR: &str = "#9e9e9e";
pub const SUBWAY_COLOR: &str = "#1f4fd8";
pub const BUS_STATION_COLOR: &str = "#2e9d3a";
pub const TRAJECTORY_COLOR: &str = "#ff0000";

const ROAD_WIDTH: f64 = 1.0;
const SUBWAY_WIDTH: f64 = 2.0;
const BUS_STATION_RADIUS: f64 = 3.0;
const TRAJECTORY_WIDTH: f64 = 2.0;
const START_MARKER_RADIUS: f64 = 4.0;
const END_MARKER_HALF: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderStyle {
    pub width_px: u32,
    pub height_px: u32,
    pub buffer_frac: f64,
    /// Also produce a PNG alongside the SVG.
    pub raster: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            width_px: 768,
            height_px: 768,
            buffer_frac: 0.2,
            raster: false,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.width_px < 16 || self.height_px < 16 {
            return Err(SceneError::Style(format!(
                "canvas {}x{} is too small",
                self.width_px, self.height_px
            )));
        }
        if !self.buffer_frac.is_finite() || self.buffer_frac <= 0.0 {
            return Err(SceneError::InvalidBuffer(self.buffer_frac));
        }
        Ok(())
    }
}

/// Maps lon/lat inside a box to canvas pixels (y grows downwards).
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    bbox: BBox,
    px_per_deg_lon: f64,
    px_per_deg_lat: f64,
    offset_x: f64,
    offset_y: f64,
}

impl Projection {
    pub fn new(bbox: BBox, width_px: u32, height_px: u32) -> Result<Self, SceneError> {
        if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
            return Err(SceneError::ZeroArea(bbox));
        }
        let mid_lat = ((bbox.min_lat + bbox.max_lat) / 2.0).to_radians();
        let aspect = mid_lat.cos();
        let (w, h) = (width_px as f64, height_px as f64);
        let scale = (w / (bbox.width() * aspect)).min(h / bbox.height());
        let px_per_deg_lon = scale * aspect;
        let px_per_deg_lat = scale;
        Ok(Self {
            bbox,
            px_per_deg_lon,
            px_per_deg_lat,
            offset_x: (w - bbox.width() * px_per_deg_lon) / 2.0,
            offset_y: (h - bbox.height() * px_per_deg_lat) / 2.0,
        })
    }

    pub fn project(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            self.offset_x + (lon - self.bbox.min_lon) * self.px_per_deg_lon,
            self.offset_y + (self.bbox.max_lat - lat) * self.px_per_deg_lat,
        )
    }

    pub fn unproject(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.bbox.min_lon + (x - self.offset_x) / self.px_per_deg_lon,
            self.bbox.max_lat - (y - self.offset_y) / self.px_per_deg_lat,
        )
    }
}

/// A rendered scene: SVG document, optional PNG bytes and the metadata the
/// image embedder needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    pub segment_id: String,
    pub width_px: u32,
    pub height_px: u32,
    pub bbox: BBox,
    pub vector_doc: String,
    pub raster: Option<Vec<u8>>,
    pub style_version: String,
}

/// Metadata record stored next to each rendered scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSidecar {
    pub segment_id: String,
    pub bbox: BBox,
    pub width_px: u32,
    pub height_px: u32,
    pub style_version: String,
    pub vector_sha256: String,
    pub raster_sha256: Option<String>,
}

impl SceneImage {
    pub fn sidecar(&self) -> SceneSidecar {
        SceneSidecar {
            segment_id: self.segment_id.clone(),
            bbox: self.bbox,
            width_px: self.width_px,
            height_px: self.height_px,
            style_version: self.style_version.clone(),
            vector_sha256: hex::encode(Sha256::digest(self.vector_doc.as_bytes())),
            raster_sha256: self.raster.as_ref().map(|r| hex::encode(Sha256::digest(r))),
        }
    }
}

/// Projected geometry in draw order.
struct DrawList {
    roads: Vec<Vec<(f64, f64)>>,
    subway: Vec<Vec<(f64, f64)>>,
    bus: Vec<(f64, f64)>,
    trajectory: Vec<(f64, f64)>,
}

fn project_all(proj: &Projection, line: &[LonLat]) -> Vec<(f64, f64)> {
    line.iter().map(|&(lon, lat)| proj.project(lon, lat)).collect()
}

fn fmt_points(points: &[(f64, f64)]) -> String {
    let mut s = String::with_capacity(points.len() * 14);
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:.2},{y:.2}");
    }
    s
}

fn svg_doc(draw: &DrawList, w: u32, h: u32, segment_id: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" data-style=\"{STYLE_VERSION}\" data-segment=\"{}\">",
        quick_xml::escape::escape(segment_id)
    );
    let _ = writeln!(s, "<rect id=\"background\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"{BACKGROUND}\"/>");

    let _ = writeln!(
        s,
        "<g id=\"roads\" fill=\"none\" stroke=\"{ROAD_COLOR}\" stroke-width=\"{ROAD_WIDTH}\" stroke-linejoin=\"round\">"
    );
    for line in &draw.roads {
        let _ = writeln!(s, "<polyline points=\"{}\"/>", fmt_points(line));
    }
    s.push_str("</g>\n");

    let _ = writeln!(
        s,
        "<g id=\"subway-lines\" fill=\"none\" stroke=\"{SUBWAY_COLOR}\" stroke-width=\"{SUBWAY_WIDTH}\" stroke-linejoin=\"round\">"
    );
    for line in &draw.subway {
        let _ = writeln!(s, "<polyline points=\"{}\"/>", fmt_points(line));
    }
    s.push_str("</g>\n");

    let _ = writeln!(s, "<g id=\"bus-stations\" fill=\"{BUS_STATION_COLOR}\" stroke=\"none\">");
    for (x, y) in &draw.bus {
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{BUS_STATION_RADIUS}\"/>");
    }
    s.push_str("</g>\n");

    s.push_str("<g id=\"trajectory\">\n");
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{TRAJECTORY_COLOR}\" stroke-width=\"{TRAJECTORY_WIDTH}\" stroke-linejoin=\"round\" stroke-linecap=\"round\"/>",
        fmt_points(&draw.trajectory)
    );
    let (sx, sy) = draw.trajectory[0];
    let _ = writeln!(
        s,
        "<circle class=\"start\" cx=\"{sx:.2}\" cy=\"{sy:.2}\" r=\"{START_MARKER_RADIUS}\" fill=\"{TRAJECTORY_COLOR}\"/>"
    );
    let (ex, ey) = draw.trajectory[draw.trajectory.len() - 1];
    let side = 2.0 * END_MARKER_HALF;
    let _ = writeln!(
        s,
        "<rect class=\"end\" x=\"{:.2}\" y=\"{:.2}\" width=\"{side}\" height=\"{side}\" fill=\"{TRAJECTORY_COLOR}\"/>",
        ex - END_MARKER_HALF,
        ey - END_MARKER_HALF
    );
    s.push_str("</g>\n</svg>\n");
    s
}

fn rgb(hex: &str) -> tiny_skia::Color {
    let v = u32::from_str_radix(hex.trim_start_matches('#'), 16).expect("palette color");
    tiny_skia::Color::from_rgba8((v >> 16) as u8, (v >> 8) as u8, v as u8, 255)
}

fn rasterize(draw: &DrawList, w: u32, h: u32) -> Result<Vec<u8>, SceneError> {
    use tiny_skia::{FillRule, Paint, PathBuilder, Pixmap, Rect, Stroke, Transform};

    let mut pixmap = Pixmap::new(w, h).ok_or_else(|| SceneError::Raster("canvas".into()))?;
    pixmap.fill(rgb(BACKGROUND));
    let paint = |hex: &str| {
        let mut p = Paint::default();
        p.set_color(rgb(hex));
        p.anti_alias = true;
        p
    };
    let stroke = |width: f64| Stroke {
        width: width as f32,
        line_join: tiny_skia::LineJoin::Round,
        line_cap: tiny_skia::LineCap::Round,
        ..Stroke::default()
    };
    let polyline = |pts: &[(f64, f64)]| {
        let mut pb = PathBuilder::new();
        pb.move_to(pts[0].0 as f32, pts[0].1 as f32);
        for p in &pts[1..] {
            pb.line_to(p.0 as f32, p.1 as f32);
        }
        pb.finish()
    };
    let id = Transform::identity();

    for (lines, color, width) in [
        (&draw.roads, ROAD_COLOR, ROAD_WIDTH),
        (&draw.subway, SUBWAY_COLOR, SUBWAY_WIDTH),
    ] {
        let p = paint(color);
        for line in lines {
            if let Some(path) = polyline(line) {
                pixmap.stroke_path(&path, &p, &stroke(width), id, None);
            }
        }
    }
    let bus = paint(BUS_STATION_COLOR);
    for &(x, y) in &draw.bus {
        if let Some(c) = PathBuilder::from_circle(x as f32, y as f32, BUS_STATION_RADIUS as f32) {
            pixmap.fill_path(&c, &bus, FillRule::Winding, id, None);
        }
    }
    let red = paint(TRAJECTORY_COLOR);
    if let Some(path) = polyline(&draw.trajectory) {
        pixmap.stroke_path(&path, &red, &stroke(TRAJECTORY_WIDTH), id, None);
    }
    let (sx, sy) = draw.trajectory[0];
    if let Some(c) = PathBuilder::from_circle(sx as f32, sy as f32, START_MARKER_RADIUS as f32) {
        pixmap.fill_path(&c, &red, FillRule::Winding, id, None);
    }
    let (ex, ey) = draw.trajectory[draw.trajectory.len() - 1];
    let half = END_MARKER_HALF as f32;
    if let Some(r) = Rect::from_xywh(ex as f32 - half, ey as f32 - half, 2.0 * half, 2.0 * half) {
        pixmap.fill_rect(r, &red, id, None);
    }
    pixmap
        .encode_png()
        .map_err(|e| SceneError::Raster(e.to_string()))
}

/// Draws roads (gray), subway lines (blue), bus stations (green dots) and
/// finally the trajectory (red, with a round start and square end marker).
pub fn render_scene(
    seg: &TrajectorySegment,
    layers: &SceneLayers,
    bbox: &BBox,
    style: &RenderStyle,
) -> Result<SceneImage, SceneError> {
    style.validate()?;
    let proj = Projection::new(*bbox, style.width_px, style.height_px)?;
    let trajectory: Vec<LonLat> = seg.points().iter().map(|p| (p.lon, p.lat)).collect();
    let draw = DrawList {
        roads: layers.roads.iter().map(|l| project_all(&proj, l)).collect(),
        subway: layers.subway_lines.iter().map(|l| project_all(&proj, l)).collect(),
        bus: layers
            .bus_stations
            .iter()
            .map(|&(lon, lat)| proj.project(lon, lat))
            .collect(),
        trajectory: project_all(&proj, &trajectory),
    };
    let vector_doc = svg_doc(&draw, style.width_px, style.height_px, seg.id());
    let raster = if style.raster {
        Some(rasterize(&draw, style.width_px, style.height_px)?)
    } else {
        None
    };
    Ok(SceneImage {
        segment_id: seg.id().to_string(),
        width_px: style.width_px,
        height_px: style.height_px,
        bbox: *bbox,
        vector_doc,
        raster,
        style_version: STYLE_VERSION.to_string(),
    })
}
