//! A synthetic labeled corpus on a generated city.
//!
//! The city is a square street grid (residential streets with primary roads
//! every few blocks), straight subway lines offset half a block from the
//! streets, and bus stops along every primary road. Each mode has its own
//! route rules and kinematics; points are sampled at a fixed interval with
//! autocorrelated GPS noise. Everything derives from one seed.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geo::LocalFrame;
use crate::scene::osm::{write_osm_xml, MemberKind, OsmExtract, OsmNode, OsmRelation, OsmWay, RelationMember, Tags};
use crate::trajectory::{write_labels, write_plt, GpsPoint, LabelInterval, Mode, TrajectorySegment};

/// 2009-01-01T00:00:00Z.
const BASE_TS: i64 = 1_230_768_000;
const LOCAL_OFFSET_S: i64 = 8 * 3600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub speed_mean_mps: f64,
    pub speed_sd_mps: f64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
}

impl ModeParams {
    const fn new(mean: f64, sd: f64, min_d: f64, max_d: f64) -> Self {
        Self { speed_mean_mps: mean, speed_sd_mps: sd, min_duration_s: min_d, max_duration_s: max_d }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub segments_per_mode: usize,
    pub users: usize,
    pub sample_interval_s: u32,
    pub gps_noise_m: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub extent_m: f64,
    pub block_m: f64,
    /// Every n-th street is a primary road.
    pub major_every: usize,
    pub walk: ModeParams,
    pub bike: ModeParams,
    pub bus: ModeParams,
    pub car: ModeParams,
    pub subway: ModeParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            segments_per_mode: 20,
            users: 5,
            sample_interval_s: 2,
            gps_noise_m: 0.3,
            origin_lat: 39.95,
            origin_lon: 116.35,
            extent_m: 16_000.0,
            block_m: 300.0,
            major_every: 4,
            walk: ModeParams::new(1.2, 0.3, 480.0, 1200.0),
            bike: ModeParams::new(4.0, 1.0, 300.0, 900.0),
            bus: ModeParams::new(7.0, 2.0, 360.0, 900.0),
            car: ModeParams::new(11.0, 4.0, 300.0, 720.0),
            subway: ModeParams::new(15.0, 3.0, 300.0, 720.0),
        }
    }
}

impl SynthConfig {
    pub fn params(&self, mode: Mode) -> &ModeParams {
        match mode {
            Mode::Walk => &self.walk,
            Mode::Bike => &self.bike,
            Mode::Bus => &self.bus,
            Mode::Car => &self.car,
            Mode::Subway => &self.subway,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.users == 0 || self.sample_interval_s == 0 || self.major_every == 0 {
            return Err("users, sample_interval_s and major_every must be >= 1".into());
        }
        if !(self.block_m > 0.0 && self.extent_m >= 8.0 * self.block_m) {
            return Err("extent_m must cover at least 8 blocks".into());
        }
        if !(self.gps_noise_m >= 0.0) {
            return Err("gps_noise_m must be >= 0".into());
        }
        for m in Mode::ALL {
            let p = self.params(m);
            if !(p.speed_mean_mps > 0.0 && p.speed_sd_mps >= 0.0 && 60.0 <= p.min_duration_s && p.min_duration_s <= p.max_duration_s) {
                return Err(format!("invalid generator parameters for {m}"));
            }
            if p.max_duration_s > 6.0 * 3600.0 {
                return Err(format!("{m} trips may not exceed 6 hours"));
            }
        }
        Ok(())
    }
}

type Xy = (f64, f64);

#[derive(Debug, Clone)]
struct SubwayLine {
    points: Vec<Xy>,
    /// Station positions as distances along `points`.
    stations: Vec<f64>,
}

/// Generated geometry in local meters plus its OSM encoding.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub frame: LocalFrame,
    pub osm: OsmExtract,
    block: f64,
    lines: usize,
    major_every: usize,
    subway: Vec<SubwayLine>,
    /// Bus-stop coordinates along each primary road, keyed by
    /// (is_vertical, line index); sorted ascending.
    bus_stops: BTreeMap<(bool, usize), Vec<f64>>,
}

impl SynthWorld {
    fn coord(&self, i: usize) -> f64 {
        i as f64 * self.block - (self.lines as f64 * self.block) / 2.0
    }

    fn is_major(&self, k: usize) -> bool {
        k.is_multiple_of(self.major_every)
    }

    /// Subway polylines in local meters.
    pub fn subway_polylines(&self) -> Vec<Vec<Xy>> {
        self.subway.iter().map(|l| l.points.clone()).collect()
    }
}

fn tags(pairs: &[(&str, &str)]) -> Tags {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn build_world(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> SynthWorld {
    let frame = LocalFrame::new(cfg.origin_lat, cfg.origin_lon);
    let lines = (cfg.extent_m / cfg.block_m).round() as usize;
    let mut world = SynthWorld {
        frame,
        osm: OsmExtract::default(),
        block: cfg.block_m,
        lines,
        major_every: cfg.major_every,
        subway: Vec::new(),
        bus_stops: BTreeMap::new(),
    };
    let node_at = |frame: &LocalFrame, x: f64, y: f64, t: Tags| {
        let (lat, lon) = frame.to_latlon(x, y);
        OsmNode { lat: round6(lat), lon: round6(lon), tags: t }
    };
    let grid_id = |i: usize, j: usize| 1 + (i * (lines + 1) + j) as i64;
    for i in 0..=lines {
        for j in 0..=lines {
            let n = node_at(&frame, world.coord(i), world.coord(j), Tags::new());
            world.osm.nodes.insert(grid_id(i, j), n);
        }
    }
    for k in 0..=lines {
        let class = if world.is_major(k) { "primary" } else { "residential" };
        let h = OsmWay { node_ids: (0..=lines).map(|i| grid_id(i, k)).collect(), tags: tags(&[("highway", class)]) };
        let v = OsmWay { node_ids: (0..=lines).map(|j| grid_id(k, j)).collect(), tags: tags(&[("highway", class)]) };
        world.osm.ways.insert(100_000 + k as i64, h);
        world.osm.ways.insert(200_000 + k as i64, v);
    }

    // Subway: two east-west and two north-south lines, half a block off-grid.
    let half = cfg.block_m / 2.0;
    let specs = [(false, lines / 3), (false, 2 * lines / 3), (true, lines / 4), (true, 3 * lines / 4)];
    for (n, &(vertical, k)) in specs.iter().enumerate() {
        let offset = world.coord(k) + half;
        let points: Vec<Xy> = (0..=lines)
            .map(|s| if vertical { (offset, world.coord(s)) } else { (world.coord(s), offset) })
            .collect();
        let base = 300_000 + 1_000 * n as i64;
        let ids: Vec<i64> = (0..points.len()).map(|s| base + s as i64).collect();
        for (id, p) in ids.iter().zip(&points) {
            world.osm.nodes.insert(*id, node_at(&frame, p.0, p.1, Tags::new()));
        }
        // The first half carries railway=subway; the second half is only
        // reachable through the route relation.
        let mid = ids.len() / 2;
        let wa = 400_000 + 2 * n as i64;
        let wb = wa + 1;
        world.osm.ways.insert(wa, OsmWay { node_ids: ids[..=mid].to_vec(), tags: tags(&[("railway", "subway")]) });
        world.osm.ways.insert(wb, OsmWay { node_ids: ids[mid..].to_vec(), tags: tags(&[("layer", "-1")]) });
        let line_name = format!("Line {}", n + 1);
        world.osm.relations.insert(
            500_000 + n as i64,
            OsmRelation {
                members: [wa, wb]
                    .iter()
                    .map(|&w| RelationMember { kind: MemberKind::Way, ref_id: w, role: String::new() })
                    .collect(),
                tags: tags(&[("type", "route"), ("route", "subway"), ("name", &line_name)]),
            },
        );
        let length = lines as f64 * cfg.block_m;
        let mut stations = Vec::new();
        let mut at = rng.gen_range(200.0..800.0);
        while at < length - 200.0 {
            stations.push(at);
            at += rng.gen_range(1200.0..1800.0);
        }
        for (s, &c) in stations.iter().enumerate() {
            let p = point_at(&points, c);
            world
                .osm
                .nodes
                .insert(600_000 + 1_000 * n as i64 + s as i64, node_at(&frame, p.0, p.1, tags(&[("railway", "station")])));
        }
        world.subway.push(SubwayLine { points, stations });
    }

    // Bus stops every 400-600 m along each primary road, 6 m to the side.
    let mut stop_id = 700_000i64;
    let mut route_id = 800_000i64;
    let span = (world.coord(0), world.coord(lines));
    for k in (0..=lines).step_by(cfg.major_every) {
        for vertical in [false, true] {
            let mut stops = Vec::new();
            let mut at = span.0 + rng.gen_range(100.0..400.0);
            let mut members = vec![RelationMember {
                kind: MemberKind::Way,
                ref_id: if vertical { 200_000 } else { 100_000 } + k as i64,
                role: String::new(),
            }];
            while at < span.1 - 100.0 {
                let line = world.coord(k);
                let (x, y) = if vertical { (line + 6.0, at) } else { (at, line + 6.0) };
                world.osm.nodes.insert(stop_id, node_at(&frame, x, y, tags(&[("highway", "bus_stop")])));
                members.push(RelationMember { kind: MemberKind::Node, ref_id: stop_id, role: "stop".into() });
                stops.push(at);
                stop_id += 1;
                at += rng.gen_range(400.0..600.0);
            }
            world.osm.relations.insert(route_id, OsmRelation { members, tags: tags(&[("type", "route"), ("route", "bus")]) });
            route_id += 1;
            world.bus_stops.insert((vertical, k), stops);
        }
    }
    world
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn dist(a: Xy, b: Xy) -> f64 {
    (b.0 - a.0).hypot(b.1 - a.1)
}

fn point_at(line: &[Xy], chainage: f64) -> Xy {
    let mut left = chainage.max(0.0);
    for w in line.windows(2) {
        let d = dist(w[0], w[1]);
        if left <= d && d > 0.0 {
            let t = left / d;
            return (w[0].0 + t * (w[1].0 - w[0].0), w[0].1 + t * (w[1].1 - w[0].1));
        }
        left -= d;
    }
    *line.last().expect("non-empty line")
}

/// A polyline with scheduled halts.
#[derive(Debug, Default)]
struct Route {
    points: Vec<Xy>,
    length: f64,
    /// (distance along the route, dwell seconds), ascending.
    stops: Vec<(f64, f64)>,
}

impl Route {
    fn push(&mut self, p: Xy) {
        if let Some(&last) = self.points.last() {
            self.length += dist(last, p);
        }
        self.points.push(p);
    }

    fn stop_here(&mut self, dwell: f64) {
        self.stops.push((self.length, dwell));
    }
}

const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

fn grid_route(world: &SynthWorld, mode: Mode, min_len: f64, rng: &mut ChaCha8Rng) -> Route {
    let n = world.lines as i64;
    let majors: Vec<i64> = (0..=n).filter(|k| world.is_major(*k as usize)).collect();
    let margin = 2i64;
    // Start: buses and cars begin on a primary road.
    let (mut i, mut j, mut dir) = if matches!(mode, Mode::Bus | Mode::Car) {
        let k = majors[rng.gen_range(1..majors.len() - 1)];
        let along = rng.gen_range(margin..=n - margin);
        if rng.gen_bool(0.5) {
            (along, k, if along < n / 2 { 0 } else { 2 })
        } else {
            (k, along, if along < n / 2 { 1 } else { 3 })
        }
    } else {
        (rng.gen_range(margin..=n - margin), rng.gen_range(margin..=n - margin), rng.gen_range(0..4))
    };
    let xy = |i: i64, j: i64| (world.coord(i as usize), world.coord(j as usize));
    let mut route = Route::default();
    route.push(xy(i, j));
    let inside = |i: i64, j: i64| (0..=n).contains(&i) && (0..=n).contains(&j);
    // Is the road through (i, j) in direction d a primary road?
    let major_along = |i: i64, j: i64, d: usize| {
        let horizontal = DIRS[d].1 == 0;
        world.is_major(if horizontal { j } else { i } as usize)
    };

    while route.length < min_len {
        let (di, dj) = DIRS[dir];
        let (ni, nj) = (i + di, j + dj);
        if !inside(ni, nj) || (mode == Mode::Bus && !major_along(i, j, dir)) {
            let options: Vec<usize> = [(dir + 1) % 4, (dir + 3) % 4]
                .into_iter()
                .filter(|&d| inside(i + DIRS[d].0, j + DIRS[d].1) && (mode != Mode::Bus || major_along(i, j, d)))
                .collect();
            dir = if options.is_empty() { (dir + 2) % 4 } else { options[rng.gen_range(0..options.len())] };
            continue;
        }
        let from = xy(i, j);
        let to = xy(ni, nj);
        let horizontal = dj == 0;
        let line = if horizontal { j } else { i } as usize;
        if mode == Mode::Walk {
            // Sidewalk wander: small lateral offsets every 8-25 m.
            let len = dist(from, to);
            let (ux, uy) = ((to.0 - from.0) / len, (to.1 - from.1) / len);
            let mut at = rng.gen_range(8.0..25.0);
            while at < len - 8.0 {
                let off = rng.gen_range(-3.0..3.0);
                route.push((from.0 + ux * at - uy * off, from.1 + uy * at + ux * off));
                at += rng.gen_range(8.0..25.0);
            }
        }
        if mode == Mode::Bus && world.is_major(line) {
            let key = (!horizontal, line);
            let (a, b) = if horizontal { (from.0, to.0) } else { (from.1, to.1) };
            let mut passed: Vec<f64> =
                world.bus_stops[&key].iter().copied().filter(|&s| (s - a) * (s - b) < 0.0).collect();
            if b < a {
                passed.reverse();
            }
            for s in passed {
                let p = if horizontal { (s, from.1) } else { (from.0, s) };
                route.push(p);
                route.stop_here(rng.gen_range(20.0..40.0));
            }
        }
        route.push(to);
        (i, j) = (ni, nj);

        let cross_major = major_along(i, j, (dir + 1) % 4);
        let here_major = major_along(i, j, dir);
        let (turn_p, stop_p, dwell): (f64, f64, (f64, f64)) = match mode {
            Mode::Walk => (0.5, 0.25, (3.0, 15.0)),
            Mode::Bike => (0.3, 0.15, (3.0, 8.0)),
            Mode::Car if cross_major && here_major => (0.25, 0.35, (10.0, 40.0)),
            Mode::Car if cross_major => (0.6, 0.1, (2.0, 6.0)),
            Mode::Car => (0.05, 0.05, (2.0, 6.0)),
            Mode::Bus if cross_major && here_major => (0.25, 0.3, (10.0, 30.0)),
            _ => (0.0, 0.0, (1.0, 2.0)),
        };
        if rng.gen_bool(stop_p) {
            route.stop_here(rng.gen_range(dwell.0..dwell.1));
        }
        if rng.gen_bool(turn_p) {
            let d = if rng.gen_bool(0.5) { (dir + 1) % 4 } else { (dir + 3) % 4 };
            if inside(i + DIRS[d].0, j + DIRS[d].1) && (mode != Mode::Bus || major_along(i, j, d)) {
                dir = d;
            }
        }
    }
    route
}

fn subway_route(world: &SynthWorld, rng: &mut ChaCha8Rng) -> Route {
    let line = &world.subway[rng.gen_range(0..world.subway.len())];
    let total: f64 = line.points.windows(2).map(|w| dist(w[0], w[1])).sum();
    let k = rng.gen_range(0..line.stations.len());
    let start = line.stations[k];
    let forward = start < total / 2.0;
    let (points, stations): (Vec<Xy>, Vec<f64>) = if forward {
        (line.points.clone(), line.stations.clone())
    } else {
        (line.points.iter().rev().copied().collect(), line.stations.iter().rev().map(|s| total - s).collect())
    };
    let start = if forward { start } else { total - start };
    let mut route = Route::default();
    route.push(point_at(&points, start));
    let mut cum = 0.0;
    let mut next_station = stations.iter().copied().filter(|&s| s > start).peekable();
    for w in points.windows(2) {
        let seg_end = cum + dist(w[0], w[1]);
        while let Some(&s) = next_station.peek() {
            if s > seg_end {
                break;
            }
            route.push(point_at(&points, s));
            route.stop_here(rng.gen_range(20.0..40.0));
            next_station.next();
        }
        if seg_end > start {
            route.push(w[1]);
        }
        cum = seg_end;
    }
    route
}

/// Walks the route in time. Returns `(x, y, t)` with `t` in whole seconds
/// from the start.
fn drive(route: &Route, p: &ModeParams, duration: f64, dt: u32, rng: &mut ChaCha8Rng) -> Vec<(f64, f64, u32)> {
    let lo = (p.speed_mean_mps - 2.5 * p.speed_sd_mps).max(0.3);
    let hi = p.speed_mean_mps + 2.5 * p.speed_sd_mps;
    let v0 = Normal::new(p.speed_mean_mps, p.speed_sd_mps.max(1e-9)).expect("finite").sample(rng).clamp(lo, hi);
    let mut out = Vec::new();
    let (mut s, mut t, mut wobble, mut dwell_left) = (0.0f64, 0u32, 0.0f64, 0.0f64);
    let mut stops = route.stops.iter().peekable();
    while (t as f64) <= duration {
        let (x, y) = point_at(&route.points, s);
        out.push((x, y, t));
        t += dt;
        if dwell_left > 0.0 {
            dwell_left -= dt as f64;
            continue;
        }
        let g: f64 = rng.sample(StandardNormal);
        wobble = 0.8 * wobble + 0.6 * g;
        let v = (v0 * (1.0 + 0.08 * wobble)).max(0.3 * v0);
        let next = s + v * dt as f64;
        match stops.peek() {
            Some(&&(at, dwell)) if next >= at => {
                s = at;
                dwell_left = dwell;
                stops.next();
            }
            _ => s = next,
        }
        if s >= route.length {
            let (x, y) = point_at(&route.points, route.length);
            out.push((x, y, t));
            break;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SynthUser {
    pub user_id: String,
    pub segments: Vec<TrajectorySegment>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub world: SynthWorld,
    pub users: Vec<SynthUser>,
}

/// Generates the city and `segments_per_mode` trips of every mode.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, String> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let world = build_world(cfg, &mut rng);
    let mut users: Vec<SynthUser> =
        (0..cfg.users).map(|u| SynthUser { user_id: format!("{u:03}"), segments: Vec::new() }).collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let rho: f64 = 0.9;
    let innovation = cfg.gps_noise_m * (1.0 - rho * rho).sqrt();
    let mut global = 0usize;
    for _ in 0..cfg.segments_per_mode {
        for mode in Mode::ALL {
            // Each trip gets its own stream so one mode's draws never shift another's.
            let mut trip_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            let p = cfg.params(mode);
            let duration = trip_rng.gen_range(p.min_duration_s..=p.max_duration_s);
            let route = match mode {
                Mode::Subway => subway_route(&world, &mut trip_rng),
                _ => {
                    let need = 1.5 * (p.speed_mean_mps + 2.5 * p.speed_sd_mps) * duration + 500.0;
                    grid_route(&world, mode, need, &mut trip_rng)
                }
            };
            let track = drive(&route, p, duration, cfg.sample_interval_s, &mut trip_rng);
            let user = global % cfg.users;
            let day = (global / cfg.users) as i64;
            let local_start = trip_rng.gen_range(6 * 3600..22 * 3600) as i64;
            let start_ts = BASE_TS + day * 86_400 + local_start - LOCAL_OFFSET_S;
            let (mut ex, mut ey) = (noise.sample(&mut trip_rng) * cfg.gps_noise_m, noise.sample(&mut trip_rng) * cfg.gps_noise_m);
            let points: Vec<GpsPoint> = track
                .iter()
                .map(|&(x, y, t)| {
                    ex = rho * ex + innovation * noise.sample(&mut trip_rng);
                    ey = rho * ey + innovation * noise.sample(&mut trip_rng);
                    let (lat, lon) = world.frame.to_latlon(x + ex, y + ey);
                    GpsPoint::new(round6(lon), round6(lat), (start_ts + t as i64) as f64).expect("valid synthetic point")
                })
                .collect();
            let id = format!("{}_{start_ts}-0", users[user].user_id);
            let seg = TrajectorySegment::new(id, points, Some(mode)).map_err(|e| e.to_string())?;
            users[user].segments.push(seg);
            global += 1;
        }
    }
    Ok(SynthCorpus { world, users })
}

impl SynthCorpus {
    pub fn segments(&self) -> impl Iterator<Item = &TrajectorySegment> {
        self.users.iter().flat_map(|u| &u.segments)
    }

    /// Writes `Data/<user>/Trajectory/<start>.plt`, `Data/<user>/labels.txt`
    /// and `osm.xml` under `root`.
    pub fn write_geolife(&self, root: &Path) -> std::io::Result<()> {
        for u in &self.users {
            let traj_dir = root.join("Data").join(&u.user_id).join("Trajectory");
            std::fs::create_dir_all(&traj_dir)?;
            let mut labels = Vec::new();
            for seg in &u.segments {
                let name = chrono::DateTime::from_timestamp(seg.start_ts() as i64, 0)
                    .expect("timestamp in range")
                    .format("%Y%m%d%H%M%S");
                std::fs::write(traj_dir.join(format!("{name}.plt")), write_plt(seg.points()))?;
                labels.push(LabelInterval {
                    start_ts: seg.start_ts(),
                    end_ts: seg.end_ts(),
                    raw_mode: seg.mode().expect("synthetic segments are labeled").as_str().to_string(),
                });
            }
            std::fs::write(root.join("Data").join(&u.user_id).join("labels.txt"), write_labels(&labels))?;
        }
        std::fs::write(root.join("osm.xml"), write_osm_xml(&self.world.osm))
    }
}
