//! Modality embeddings and the rules that combine them.
//!
//! The offline embedders hash a bag of tokens into a signed, seeded
//! `D`-dimensional vector. Text tokens come from the narrative; image tokens
//! are quantized statistics of the rendered scene. Remote embeddings come
//! from an [`EmbedClient`] and are normalized locally.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use twox_hash::XxHash64;

use crate::geo::{point_polyline_distance, LocalFrame};
use crate::narrative::SceneText;
use crate::remote::{with_retry, Attempted, EmbedClient, EmbedRequest, RateLimiter, RemoteError, RetryPolicy};
use crate::scene::render::Projection;
use crate::scene::{SceneError, SceneLayers, SceneSidecar};
use crate::trajectory::{Mode, TrajectorySegment};

/// Smallest accepted embedding dimension.
pub const MIN_DIM: usize = 8;
/// Distance under which a trajectory point counts as riding along a line.
pub const NEAR_LINE_M: f64 = 30.0;
/// Upper edges (meters) of the minimum-distance bins; the last bin is open.
pub const DISTANCE_BINS_M: [f64; 5] = [10.0, 30.0, 100.0, 300.0, 1000.0];

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding dimension must be >= {MIN_DIM}, got {0}")]
    Dimension(usize),
    #[error("segment id mismatch: {0} vs {1}")]
    SegmentMismatch(String, String),
    #[error("rule {rule} needs the {missing} embedding")]
    MissingModality { rule: CombineRule, missing: Modality },
    #[error("fusion needs equal dimensions, got {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("remote embedding returned {got} values, expected {expected}")]
    Integrity { expected: usize, got: usize },
    #[error("remote embedding is all zeros or not finite")]
    Degenerate,
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Text,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Image => "image",
            Modality::Text => "text",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineRule {
    Concatenation,
    Fusion,
    ImageOnly,
    TextOnly,
}

impl CombineRule {
    pub const ALL: [CombineRule; 4] =
        [CombineRule::ImageOnly, CombineRule::TextOnly, CombineRule::Fusion, CombineRule::Concatenation];

    pub fn as_str(self) -> &'static str {
        match self {
            CombineRule::Concatenation => "concatenation",
            CombineRule::Fusion => "fusion",
            CombineRule::ImageOnly => "image_only",
            CombineRule::TextOnly => "text_only",
        }
    }
}

impl std::fmt::Display for CombineRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CombineRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        CombineRule::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown combine rule {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityEmbedding {
    pub segment_id: String,
    pub modality: Modality,
    pub embedder_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEmbedding {
    pub segment_id: String,
    pub combine_rule: CombineRule,
    pub embedder_id: String,
    #[serde(default)]
    pub mode_label: Option<Mode>,
    #[serde(rename = "vector")]
    pub combined: Vec<f64>,
}

/// Signed feature hashing with a seeded 64-bit hash. The low bits (mod `dim`)
/// pick the coordinate and bit 63 picks the sign.
#[derive(Debug, Clone, Copy)]
pub struct FeatureHasher {
    pub dim: usize,
    pub seed: u64,
}

impl FeatureHasher {
    pub fn new(dim: usize, seed: u64) -> Result<Self, EmbeddingError> {
        if dim < MIN_DIM {
            return Err(EmbeddingError::Dimension(dim));
        }
        Ok(Self { dim, seed })
    }

    pub fn slot(&self, token: &str) -> (usize, f64) {
        let h = XxHash64::oneshot(self.seed, token.as_bytes());
        let index = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        (index, sign)
    }

    /// Unnormalized signed counts.
    pub fn accumulate<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for t in tokens {
            let (i, s) = self.slot(t.as_ref());
            v[i] += s;
        }
        v
    }

    /// Hashes and L2-normalizes; an all-zero bag becomes `e_1`.
    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut v = self.accumulate(tokens);
        if !normalize(&mut v) {
            v.iter_mut().for_each(|x| *x = 0.0);
            v[0] = 1.0;
        }
        v
    }
}

/// Scales `v` to unit length; returns false (leaving `v` untouched) when the
/// norm is zero or not finite.
pub fn normalize(v: &mut [f64]) -> bool {
    let n = l2_norm(v);
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// First number after `label`, if both exist.
fn number_after(text: &str, label: &str) -> Option<f64> {
    let rest = &text[text.find(label)? + label.len()..];
    let start = rest.find(|c: char| c.is_ascii_digit())?;
    let num: String = rest[start..]
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    num.trim_end_matches('.').parse().ok()
}

fn bin(x: f64, width: f64) -> i64 {
    (x / width).floor() as i64
}

/// Word tokens plus quantized numeric tokens read back from the narrative.
pub fn text_tokens(full_text: &str) -> Vec<String> {
    let mut tokens: Vec<String> = word_tokens(full_text).collect();
    let kmh_to_mps = |x: f64| x / 3.6;
    if let Some(v) = number_after(full_text, "Average Speed:") {
        tokens.push(format!("num:avg_speed:{}", bin(kmh_to_mps(v), 0.5)));
    }
    if let Some(v) = number_after(full_text, "Detour Index: ~") {
        tokens.push(format!("num:detour:{}", bin(v, 0.25)));
    }
    if let Some(text) = full_text.find("leg speeds range").map(|i| &full_text[i..]) {
        if let Some(max) = number_after(text, "-") {
            tokens.push(format!("num:max_speed:{}", bin(kmh_to_mps(max), 1.0)));
        }
        if let Some(std) = number_after(text, "standard deviation") {
            tokens.push(format!("num:speed_std:{}", bin(kmh_to_mps(std), 0.5)));
        }
    }
    let count = |label: &str| number_after(full_text, label).map(|v| count_bucket(v as usize));
    if let Some(b) = count("Stops:") {
        tokens.push(format!("num:brief_stops:{b}"));
    }
    if let Some(b) = count("brief stationary periods and") {
        tokens.push(format!("num:prolonged_stops:{b}"));
    }
    if let Some(b) = count("Turn Frequency:") {
        tokens.push(format!("num:sharp_turns:{b}"));
    }
    if let Some(v) = number_after(full_text, "Total Duration:") {
        tokens.push(format!("num:duration:{}", bin(v, 300.0)));
    }
    tokens
}

pub fn embed_text_offline(text: &SceneText, dim: usize, seed: u64) -> Result<ModalityEmbedding, EmbeddingError> {
    let hasher = FeatureHasher::new(dim, seed)?;
    Ok(ModalityEmbedding {
        segment_id: text.segment_id.clone(),
        modality: Modality::Text,
        embedder_id: format!("hash-text/d{dim}/s{seed}"),
        vector: hasher.embed(&text_tokens(&text.full_text)),
    })
}

/// Power-of-two count bucket: 0, 1, 2-3, 4-7, ...
fn count_bucket(n: usize) -> u32 {
    usize::BITS - n.leading_zeros()
}

fn distance_bin(d: Option<f64>) -> String {
    match d {
        None => "none".to_string(),
        Some(d) => DISTANCE_BINS_M.iter().take_while(|&&edge| d >= edge).count().to_string(),
    }
}

/// Quantized statistics of a rendered scene.
pub fn image_tokens(
    scene: &SceneSidecar,
    trajectory: &TrajectorySegment,
    layers: &SceneLayers,
) -> Result<Vec<String>, EmbeddingError> {
    if scene.segment_id != trajectory.id() {
        return Err(EmbeddingError::SegmentMismatch(scene.segment_id.clone(), trajectory.id().to_string()));
    }
    let proj = Projection::new(scene.bbox, scene.width_px, scene.height_px)?;
    let b = scene.bbox;
    let frame = LocalFrame::new((b.min_lat + b.max_lat) / 2.0, (b.min_lon + b.max_lon) / 2.0);
    let to_xy = |(lon, lat): (f64, f64)| frame.to_xy(lat, lon);

    let traj_px: Vec<(f64, f64)> = trajectory.points().iter().map(|p| proj.project(p.lon, p.lat)).collect();
    let pixel_len: f64 = traj_px
        .windows(2)
        .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
        .sum();
    let diag = (scene.width_px as f64).hypot(scene.height_px as f64);
    let traj_xy: Vec<(f64, f64)> = trajectory.points().iter().map(|p| to_xy((p.lon, p.lat))).collect();

    let subway_xy: Vec<Vec<(f64, f64)>> =
        layers.subway_lines.iter().map(|l| l.iter().copied().map(to_xy).collect()).collect();
    let subway_dist_per_point: Vec<f64> = traj_xy
        .iter()
        .map(|&p| subway_xy.iter().map(|l| point_polyline_distance(p, l)).fold(f64::INFINITY, f64::min))
        .collect();
    let min_subway = (!subway_xy.is_empty()).then(|| subway_dist_per_point.iter().copied().fold(f64::INFINITY, f64::min));
    let near_subway_frac = (!subway_xy.is_empty())
        .then(|| subway_dist_per_point.iter().filter(|&&d| d <= NEAR_LINE_M).count() as f64 / traj_xy.len() as f64);

    let stations_xy: Vec<(f64, f64)> = layers.bus_stations.iter().copied().map(to_xy).collect();
    let station_dist: Vec<f64> = stations_xy
        .iter()
        .map(|&s| point_polyline_distance(s, &traj_xy))
        .collect();
    let min_bus = station_dist.iter().copied().reduce(f64::min);
    let stations_on_path = station_dist.iter().filter(|&&d| d <= NEAR_LINE_M).count();

    let width_m = frame.to_xy(frame.origin_lat, b.max_lon).0 - frame.to_xy(frame.origin_lat, b.min_lon).0;
    let height_m = frame.to_xy(b.max_lat, frame.origin_lon).1 - frame.to_xy(b.min_lat, frame.origin_lon).1;
    let aspect_bin = ((width_m / height_m).log2() * 2.0).round().clamp(-6.0, 6.0) as i64;

    let mut tokens = vec![
        format!("roads:{}", count_bucket(layers.roads.len())),
        format!("subway_lines:{}", count_bucket(layers.subway_lines.len())),
        format!("bus_stations:{}", count_bucket(layers.bus_stations.len())),
        format!("pixel_path:{}", bin(pixel_len / diag, 0.25).min(20)),
        format!("subway_dist:{}", distance_bin(min_subway)),
        format!("bus_dist:{}", distance_bin(min_bus)),
        format!("aspect:{aspect_bin}"),
        format!("bus_on_path:{}", count_bucket(stations_on_path)),
    ];
    tokens.push(match near_subway_frac {
        Some(f) => format!("subway_share:{}", ((f * 5.0).floor() as i64).min(4)),
        None => "subway_share:none".to_string(),
    });
    Ok(tokens)
}

pub fn embed_image_offline(
    scene: &SceneSidecar,
    trajectory: &TrajectorySegment,
    layers: &SceneLayers,
    dim: usize,
    seed: u64,
) -> Result<ModalityEmbedding, EmbeddingError> {
    let hasher = FeatureHasher::new(dim, seed)?;
    let tokens = image_tokens(scene, trajectory, layers)?;
    Ok(ModalityEmbedding {
        segment_id: scene.segment_id.clone(),
        modality: Modality::Image,
        embedder_id: format!("hash-scene/d{dim}/s{seed}"),
        vector: hasher.embed(&tokens),
    })
}

/// Embeds one payload through a hosted model and normalizes the answer.
pub fn embed_remote(
    segment_id: &str,
    request: &EmbedRequest,
    expected_dim: usize,
    client: &dyn EmbedClient,
    policy: &RetryPolicy,
    limiter: Option<&RateLimiter>,
) -> Result<Attempted<ModalityEmbedding>, EmbeddingError> {
    let Attempted { value, attempts } = with_retry(policy, limiter, || client.embed(request))?;
    if value.vector.len() != expected_dim || value.dimension != expected_dim {
        return Err(EmbeddingError::Integrity { expected: expected_dim, got: value.vector.len() });
    }
    let mut vector = value.vector;
    if !normalize(&mut vector) {
        return Err(EmbeddingError::Degenerate);
    }
    let modality = match request.modality {
        crate::remote::EmbedModality::Image => Modality::Image,
        crate::remote::EmbedModality::Text => Modality::Text,
    };
    Ok(Attempted {
        value: ModalityEmbedding {
            segment_id: segment_id.to_string(),
            modality,
            embedder_id: format!("{}/d{expected_dim}", request.model),
            vector,
        },
        attempts,
    })
}

/// Applies a combination rule. Concatenation puts the image vector first and
/// is not renormalized; fusion is the element-wise mean, renormalized.
pub fn combine(
    image: Option<&ModalityEmbedding>,
    text: Option<&ModalityEmbedding>,
    rule: CombineRule,
    mode_label: Option<Mode>,
) -> Result<SceneEmbedding, EmbeddingError> {
    let need = |m: Option<&ModalityEmbedding>, which: Modality| {
        m.cloned().ok_or(EmbeddingError::MissingModality { rule, missing: which })
    };
    if let (Some(i), Some(t)) = (image, text) {
        if i.segment_id != t.segment_id {
            return Err(EmbeddingError::SegmentMismatch(i.segment_id.clone(), t.segment_id.clone()));
        }
    }
    let (segment_id, embedder_id, combined) = match rule {
        CombineRule::ImageOnly => {
            let i = need(image, Modality::Image)?;
            (i.segment_id, i.embedder_id, i.vector)
        }
        CombineRule::TextOnly => {
            let t = need(text, Modality::Text)?;
            (t.segment_id, t.embedder_id, t.vector)
        }
        CombineRule::Concatenation => {
            let i = need(image, Modality::Image)?;
            let t = need(text, Modality::Text)?;
            let mut v = i.vector;
            v.extend_from_slice(&t.vector);
            (i.segment_id, format!("{}+{}", i.embedder_id, t.embedder_id), v)
        }
        CombineRule::Fusion => {
            let i = need(image, Modality::Image)?;
            let t = need(text, Modality::Text)?;
            if i.vector.len() != t.vector.len() {
                return Err(EmbeddingError::DimensionMismatch(i.vector.len(), t.vector.len()));
            }
            let mut v: Vec<f64> = i.vector.iter().zip(&t.vector).map(|(a, b)| (a + b) / 2.0).collect();
            if !normalize(&mut v) {
                // Opposite unit vectors cancel; fall back to the zero guard.
                v.iter_mut().for_each(|x| *x = 0.0);
                v[0] = 1.0;
            }
            (i.segment_id, format!("{}|{}", i.embedder_id, t.embedder_id), v)
        }
    };
    Ok(SceneEmbedding { segment_id, combine_rule: rule, embedder_id, mode_label, combined })
}
