//! Road, subway and bus-station layers clipped to a scene box.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::osm::{MemberKind, OsmExtract, Tags};
use super::BBox;

/// `(lon, lat)` in degrees.
pub type LonLat = (f64, f64);
pub type Polyline = Vec<LonLat>;

/// `highway=*` values drawn as roads; each also accepts its `_link` variant.
pub const ROAD_CLASSES: [&str; 10] = [
    "motorway",
    "trunk",
    "primary",
    "secondary",
    "tertiary",
    "residential",
    "unclassified",
    "service",
    "footway",
    "cycleway",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneLayers {
    pub roads: Vec<Polyline>,
    pub subway_lines: Vec<Polyline>,
    pub bus_stations: Vec<LonLat>,
}

pub fn is_road(tags: &Tags) -> bool {
    tags.get("highway").is_some_and(|v| {
        let base = v.strip_suffix("_link").unwrap_or(v);
        ROAD_CLASSES.contains(&base)
    })
}

pub fn is_bus_station(tags: &Tags) -> bool {
    tags.get("highway").is_some_and(|v| v == "bus_stop")
        || (tags.get("public_transport").is_some_and(|v| v == "platform")
            && tags.get("bus").is_some_and(|v| v == "yes"))
}

/// Selects and clips the three context layers. Output order follows way and
/// node ids, so it is deterministic for a given extract.
pub fn extract_layers(osm: &OsmExtract, bbox: &BBox) -> SceneLayers {
    let mut subway_ids: BTreeSet<i64> = osm
        .ways
        .iter()
        .filter(|(_, w)| w.tags.get("railway").is_some_and(|v| v == "subway"))
        .map(|(id, _)| *id)
        .collect();
    for rel in osm.relations.values() {
        if rel.tags.get("route").is_some_and(|v| v == "subway") {
            subway_ids.extend(
                rel.members
                    .iter()
                    .filter(|m| m.kind == MemberKind::Way && osm.ways.contains_key(&m.ref_id))
                    .map(|m| m.ref_id),
            );
        }
    }

    let mut layers = SceneLayers::default();
    for (id, way) in &osm.ways {
        let is_subway = subway_ids.contains(id);
        if !is_subway && !is_road(&way.tags) {
            continue;
        }
        let pieces = clip_polyline(&osm.way_coords(way), bbox);
        if is_subway {
            layers.subway_lines.extend(pieces);
        } else {
            layers.roads.extend(pieces);
        }
    }
    layers.bus_stations = osm
        .nodes
        .values()
        .filter(|n| is_bus_station(&n.tags) && bbox.contains(n.lon, n.lat))
        .map(|n| (n.lon, n.lat))
        .collect();
    layers
}

/// Which box edge a clip parameter came from.
#[derive(Clone, Copy)]
enum Edge {
    MinLon,
    MaxLon,
    MinLat,
    MaxLat,
}

fn on_edge(p: LonLat, edge: Option<Edge>, b: &BBox) -> LonLat {
    let (lon, lat) = (p.0.clamp(b.min_lon, b.max_lon), p.1.clamp(b.min_lat, b.max_lat));
    match edge {
        Some(Edge::MinLon) => (b.min_lon, lat),
        Some(Edge::MaxLon) => (b.max_lon, lat),
        Some(Edge::MinLat) => (lon, b.min_lat),
        Some(Edge::MaxLat) => (lon, b.max_lat),
        None => p,
    }
}

/// Liang–Barsky clip of one segment. Endpoints that are inside are returned
/// bit-for-bit; crossing points are snapped onto the edge they cross.
pub fn clip_segment(a: LonLat, b: LonLat, bbox: &BBox) -> Option<(LonLat, LonLat)> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let mut e0 = None;
    let mut e1 = None;
    let checks = [
        (-dx, a.0 - bbox.min_lon, Edge::MinLon),
        (dx, bbox.max_lon - a.0, Edge::MaxLon),
        (-dy, a.1 - bbox.min_lat, Edge::MinLat),
        (dy, bbox.max_lat - a.1, Edge::MaxLat),
    ];
    for (p, q, edge) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
            continue;
        }
        let r = q / p;
        if p < 0.0 {
            if r > t1 {
                return None;
            }
            if r > t0 {
                t0 = r;
                e0 = Some(edge);
            }
        } else {
            if r < t0 {
                return None;
            }
            if r < t1 {
                t1 = r;
                e1 = Some(edge);
            }
        }
    }
    let start = if e0.is_none() {
        a
    } else {
        on_edge((a.0 + t0 * dx, a.1 + t0 * dy), e0, bbox)
    };
    let end = if e1.is_none() {
        b
    } else {
        on_edge((a.0 + t1 * dx, a.1 + t1 * dy), e1, bbox)
    };
    Some((start, end))
}

/// Clips a polyline to the box, splitting it where it leaves and re-enters.
/// Pieces with fewer than two distinct vertices are dropped.
pub fn clip_polyline(line: &[LonLat], bbox: &BBox) -> Vec<Polyline> {
    let mut out = Vec::new();
    let mut cur: Polyline = Vec::new();
    let flush = |cur: &mut Polyline, out: &mut Vec<Polyline>| {
        if cur.len() >= 2 {
            out.push(std::mem::take(cur));
        } else {
            cur.clear();
        }
    };
    for w in line.windows(2) {
        match clip_segment(w[0], w[1], bbox) {
            Some((a, b)) => {
                if cur.last() != Some(&a) {
                    flush(&mut cur, &mut out);
                    cur.push(a);
                }
                if b != a {
                    cur.push(b);
                }
                if b != w[1] {
                    flush(&mut cur, &mut out);
                }
            }
            None => flush(&mut cur, &mut out),
        }
    }
    flush(&mut cur, &mut out);
    out
}
