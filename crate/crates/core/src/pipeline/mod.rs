//! File-based pipeline stages with a resumable run manifest.
//!
//! Every stage reads files from the run directory (or the configured
//! inputs) and writes its own outputs there. A stage is skipped when its
//! fingerprint (stage config plus input digests) matches the manifest and
//! its recorded outputs are still intact.

pub mod config;
pub mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::classifier::{evaluate, run_ablation, train, Checkpoint, EvalReport, Sample, TrainLog};
use crate::embedding::{
    combine, embed_image_offline, embed_remote, embed_text_offline, CombineRule, Modality, ModalityEmbedding,
    SceneEmbedding,
};
use crate::kinematics::{analyze, KinematicsReport};
use crate::narrative::{build_prompt, remote_narrative, render_narrative, SceneText};
use crate::preprocess::{clean, segment_by_labels};
use crate::remote::{EmbedRequest, HttpEmbedClient, HttpReasonerClient};
use crate::scene::{extract_layers, parse_osm_xml, render_scene, scene_bbox, SceneError, SceneSidecar};
use crate::trajectory::{parse_labels, parse_plt, GpsPoint, Mode, TrajectorySegment};

pub use config::{EmbedderKind, NarrativeSource, PipelineConfig};
pub use manifest::{RunManifest, StageRecord, MANIFEST_FILE};

pub const SEGMENTS_FILE: &str = "segments.jsonl";
pub const KINEMATICS_FILE: &str = "kinematics.jsonl";
pub const SCENES_DIR: &str = "scenes";
pub const NARRATIVES_FILE: &str = "narratives.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const COMBINED_FILE: &str = "combined.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_LOG_FILE: &str = "train_log.json";
pub const EVAL_JSON_FILE: &str = "eval_report.json";
pub const EVAL_TEXT_FILE: &str = "eval_report.txt";
pub const ABLATION_JSON_FILE: &str = "ablation.json";
pub const ABLATION_TEXT_FILE: &str = "ablation.txt";

pub const TOOL_VERSION: &str = concat!("trajscene ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error, PartialEq)]
#[error("stage {stage}{}: {message}", segment_id.as_ref().map(|s| format!(" (segment {s})")).unwrap_or_default())]
pub struct PipelineError {
    pub stage: String,
    pub segment_id: Option<String>,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &str, segment_id: Option<&str>, message: impl Into<String>) -> Self {
        Self { stage: stage.to_string(), segment_id: segment_id.map(str::to_string), message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", None, message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Features,
    Render,
    Narrate,
    Embed,
    Combine,
    Train,
    Eval,
    Ablate,
}

impl Stage {
    /// The order `pipeline` runs them in.
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Features,
        Stage::Render,
        Stage::Narrate,
        Stage::Embed,
        Stage::Combine,
        Stage::Train,
        Stage::Eval,
        Stage::Ablate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Render => "render",
            Stage::Narrate => "narrate",
            Stage::Embed => "embed",
            Stage::Combine => "combine",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Ablate => "ablate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

/// What a stage body produced: run-relative output paths and warnings.
#[derive(Debug, Default)]
pub struct StageOutput {
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

pub struct Runner {
    cfg: PipelineConfig,
    out: PathBuf,
    manifest: RunManifest,
    /// Stages and whether they ran, in execution order.
    pub history: Vec<(Stage, StageStatus)>,
}

fn io_err(stage: Stage, what: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::new(stage.name(), None, format!("{}: {e}", what.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(std::io::Error::other)?);
        text.push('\n');
    }
    std::fs::write(path, text)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1)))
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

/// Runs `f` over items in parallel and returns results in input order; the
/// reported error is the one from the earliest failing item.
fn par_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<R, PipelineError> + Sync + Send,
) -> Result<Vec<R>, PipelineError> {
    items.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

fn scene_stem(id: &str) -> String {
    format!("{SCENES_DIR}/{id}.scene")
}

impl Runner {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate_values()?;
        let out = cfg.paths.out_dir.clone();
        std::fs::create_dir_all(&out).map_err(|e| PipelineError::config(format!("{}: {e}", out.display())))?;
        let mut manifest = RunManifest::load_or_default(&out);
        manifest.tool_version = TOOL_VERSION.to_string();
        manifest.config_sha256 = manifest::sha256_hex(cfg.portable_snapshot().to_string().as_bytes());
        Ok(Self { cfg, out, manifest, history: Vec::new() })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn stage_config(&self, stage: Stage) -> serde_json::Value {
        let c = &self.cfg;
        let remote = c.uses_remote().then(|| serde_json::to_value(&c.remote).expect("serializes"));
        match stage {
            Stage::Ingest => serde_json::json!({ "cleaning": c.cleaning }),
            Stage::Features => serde_json::json!({ "kinematics": c.kinematics }),
            Stage::Render => serde_json::json!({ "render": c.render }),
            Stage::Narrate => serde_json::json!({ "narrative": c.narrative, "remote": remote }),
            Stage::Embed => serde_json::json!({
                "embedder": c.embedding.embedder, "dim": c.embedding.dim, "seed": c.embedding.seed, "remote": remote,
            }),
            Stage::Combine => serde_json::json!({}),
            Stage::Train => serde_json::json!({ "train": c.train, "combine_rule": c.embedding.combine_rule }),
            Stage::Eval => serde_json::json!({ "combine_rule": c.embedding.combine_rule }),
            Stage::Ablate => serde_json::json!({ "train": c.train }),
        }
    }

    fn stage_inputs(&self, stage: Stage) -> Vec<(&'static str, PathBuf)> {
        let o = |f: &str| self.out.join(f);
        let p = &self.cfg.paths;
        match stage {
            Stage::Ingest => vec![("geolife_root", p.geolife_root.clone())],
            Stage::Features => vec![(SEGMENTS_FILE, o(SEGMENTS_FILE))],
            Stage::Render => vec![(SEGMENTS_FILE, o(SEGMENTS_FILE)), ("osm_extract", p.osm_extract.clone())],
            Stage::Narrate => vec![(KINEMATICS_FILE, o(KINEMATICS_FILE)), (SEGMENTS_FILE, o(SEGMENTS_FILE))],
            Stage::Embed => vec![
                (SEGMENTS_FILE, o(SEGMENTS_FILE)),
                (NARRATIVES_FILE, o(NARRATIVES_FILE)),
                (SCENES_DIR, o(SCENES_DIR)),
                ("osm_extract", p.osm_extract.clone()),
            ],
            Stage::Combine => vec![(EMBEDDINGS_FILE, o(EMBEDDINGS_FILE)), (SEGMENTS_FILE, o(SEGMENTS_FILE))],
            Stage::Train => vec![(COMBINED_FILE, o(COMBINED_FILE))],
            Stage::Eval => vec![
                (COMBINED_FILE, o(COMBINED_FILE)),
                (MODEL_FILE, o(MODEL_FILE)),
                (TRAIN_LOG_FILE, o(TRAIN_LOG_FILE)),
            ],
            Stage::Ablate => vec![(COMBINED_FILE, o(COMBINED_FILE))],
        }
    }

    fn outputs_intact(&self, rec: &StageRecord) -> bool {
        rec.outputs
            .iter()
            .all(|(rel, digest)| manifest::digest_path(&self.out.join(rel)).is_ok_and(|d| &d == digest))
    }

    /// Runs one stage unless its fingerprint and outputs are unchanged.
    pub fn run(&mut self, stage: Stage) -> Result<StageStatus, PipelineError> {
        let name = stage.name();
        let mut inputs = BTreeMap::new();
        for (label, path) in self.stage_inputs(stage) {
            let d = manifest::digest_path(&path).map_err(|e| io_err(stage, &path, e))?;
            inputs.insert(label.to_string(), d);
        }
        let config = serde_json::json!({ "tool": TOOL_VERSION, "stage": self.stage_config(stage) });
        let fp = manifest::fingerprint(name, &config, &inputs);
        if let Some(rec) = self.manifest.stages.get(name) {
            if rec.fingerprint == fp && self.outputs_intact(rec) {
                tracing::info!(stage = name, "up to date, skipped");
                self.history.push((stage, StageStatus::Skipped));
                return Ok(StageStatus::Skipped);
            }
        }
        tracing::info!(stage = name, "running");
        let output = match stage {
            Stage::Ingest => self.ingest(),
            Stage::Features => self.features(),
            Stage::Render => self.render(),
            Stage::Narrate => self.narrate(),
            Stage::Embed => self.embed(),
            Stage::Combine => self.combine(),
            Stage::Train => self.train(),
            Stage::Eval => self.eval(),
            Stage::Ablate => self.ablate(),
        }?;
        for w in &output.warnings {
            tracing::warn!(stage = name, "{w}");
        }
        let mut outputs = BTreeMap::new();
        for rel in &output.files {
            let path = self.out.join(rel);
            outputs.insert(rel.clone(), manifest::digest_path(&path).map_err(|e| io_err(stage, &path, e))?);
        }
        self.manifest
            .stages
            .insert(name.to_string(), StageRecord { fingerprint: fp, inputs, outputs, warnings: output.warnings });
        if stage == Stage::Ingest {
            self.refresh_counts()?;
        }
        self.save_manifest(stage)?;
        self.history.push((stage, StageStatus::Ran));
        Ok(StageStatus::Ran)
    }

    fn save_manifest(&self, stage: Stage) -> Result<(), PipelineError> {
        self.manifest.save(&self.out).map_err(|e| io_err(stage, &self.out.join(MANIFEST_FILE), e))
    }

    fn refresh_counts(&mut self) -> Result<(), PipelineError> {
        let segs = self.load_segments(Stage::Ingest)?;
        let mut counts: BTreeMap<String, usize> = Mode::ALL.iter().map(|m| (m.as_str().to_string(), 0)).collect();
        for s in &segs {
            if let Some(m) = s.mode() {
                *counts.entry(m.as_str().to_string()).or_default() += 1;
            }
        }
        self.manifest.segment_counts = counts;
        Ok(())
    }

    /// Runs every stage in order, skipping up-to-date ones.
    pub fn run_all(&mut self) -> Result<(), PipelineError> {
        self.cfg.validate()?;
        self.cfg.preflight()?;
        for stage in Stage::ALL {
            self.run(stage)?;
        }
        Ok(())
    }

    fn load<T: DeserializeOwned>(&self, stage: Stage, file: &str) -> Result<Vec<T>, PipelineError> {
        read_jsonl(&self.out.join(file)).map_err(|m| PipelineError::new(stage.name(), None, m))
    }

    fn load_segments(&self, stage: Stage) -> Result<Vec<TrajectorySegment>, PipelineError> {
        self.load(stage, SEGMENTS_FILE)
    }

    fn save_jsonl<T: Serialize>(&self, stage: Stage, file: &str, items: &[T]) -> Result<String, PipelineError> {
        let path = self.out.join(file);
        write_jsonl(&path, items).map_err(|e| io_err(stage, &path, e))?;
        Ok(file.to_string())
    }

    fn save_text(&self, stage: Stage, file: &str, text: &str) -> Result<String, PipelineError> {
        let path = self.out.join(file);
        std::fs::write(&path, text).map_err(|e| io_err(stage, &path, e))?;
        Ok(file.to_string())
    }

    fn save_json<T: Serialize>(&self, stage: Stage, file: &str, value: &T) -> Result<String, PipelineError> {
        let path = self.out.join(file);
        write_json(&path, value).map_err(|e| io_err(stage, &path, e))?;
        Ok(file.to_string())
    }

    fn ingest(&self) -> Result<StageOutput, PipelineError> {
        let st = Stage::Ingest;
        let root = &self.cfg.paths.geolife_root;
        let data = root.join("Data");
        if !data.is_dir() {
            return Err(io_err(st, root, "no Data directory"));
        }
        let mut users: Vec<PathBuf> = std::fs::read_dir(&data)
            .map_err(|e| io_err(st, &data, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        users.sort();
        let cleaning = &self.cfg.cleaning;
        let per_user = par_map(&users, |dir| {
            let user = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let labels_path = dir.join("labels.txt");
            if !labels_path.is_file() {
                return Ok(None);
            }
            let bytes = std::fs::read(&labels_path).map_err(|e| io_err(st, &labels_path, e))?;
            let labels = parse_labels(&bytes).map_err(|e| io_err(st, &labels_path, e))?;
            let traj_dir = dir.join("Trajectory");
            let mut files: Vec<PathBuf> = std::fs::read_dir(&traj_dir)
                .map_err(|e| io_err(st, &traj_dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("plt")))
                .collect();
            files.sort();
            let mut points: Vec<GpsPoint> = Vec::new();
            for f in &files {
                let bytes = std::fs::read(f).map_err(|e| io_err(st, f, e))?;
                points.extend(parse_plt(&bytes).map_err(|e| io_err(st, f, e))?);
            }
            points.sort_by(|a, b| a.ts.total_cmp(&b.ts));
            let cleaned = clean(&points, cleaning);
            let segs = segment_by_labels(&cleaned, &labels, cleaning, &format!("{user}_"))
                .map_err(|e| io_err(st, &labels_path, e))?;
            Ok(Some(segs))
        })?;
        let mut warnings = Vec::new();
        let mut segments = Vec::new();
        for (dir, outcome) in users.iter().zip(per_user) {
            match outcome {
                Some(segs) => segments.extend(segs),
                None => warnings.push(format!(
                    "user {} has no labels.txt; skipped",
                    dir.file_name().unwrap_or_default().to_string_lossy()
                )),
            }
        }
        if users.len() == warnings.len() {
            return Err(PipelineError::new(st.name(), None, "no labeled users found"));
        }
        segments.sort_by(|a, b| a.id().cmp(b.id()));
        Ok(StageOutput { files: vec![self.save_jsonl(st, SEGMENTS_FILE, &segments)?], warnings })
    }

    fn features(&self) -> Result<StageOutput, PipelineError> {
        let st = Stage::Features;
        let segs = self.load_segments(st)?;
        let reports = par_map(&segs, |s| {
            analyze(s, &self.cfg.kinematics).map_err(|e| PipelineError::new(st.name(), Some(s.id()), e.to_string()))
        })?;
        Ok(StageOutput { files: vec![self.save_jsonl(st, KINEMATICS_FILE, &reports)?], warnings: vec![] })
    }

    fn load_osm(&self, stage: Stage) -> Result<crate::scene::OsmExtract, PipelineError> {
        let path = &self.cfg.paths.osm_extract;
        let bytes = std::fs::read(path).map_err(|e| io_err(stage, path, e))?;
        parse_osm_xml(&bytes).map_err(|e| io_err(stage, path, e))
    }

    fn render(&self) -> Result<StageOutput, PipelineError> {
        let st = Stage::Render;
        let segs = self.load_segments(st)?;
        let osm = self.load_osm(st)?;
        let dir = self.out.join(SCENES_DIR);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| io_err(st, &dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| io_err(st, &dir, e))?;
        let style = &self.cfg.render;
        let files = par_map(&segs, |s| {
            let fail = |e: SceneError| PipelineError::new(st.name(), Some(s.id()), e.to_string());
            let bbox = scene_bbox(s, style.buffer_frac).map_err(fail)?;
            let layers = extract_layers(&osm, &bbox);
            let img = render_scene(s, &layers, &bbox, style).map_err(fail)?;
            let stem = scene_stem(s.id());
            let mut written = vec![format!("{stem}.svg"), format!("{stem}.json")];
            self.save_text(st, &written[0], &img.vector_doc)?;
            self.save_json(st, &written[1], &img.sidecar())?;
            if let Some(png) = &img.raster {
                let rel = format!("{stem}.png");
                let path = self.out.join(&rel);
                std::fs::write(&path, png).map_err(|e| io_err(st, &path, e))?;
                written.push(rel);
            }
            Ok(written)
        })?;
        Ok(StageOutput { files: files.into_iter().flatten().collect(), warnings: vec![] })
    }

    fn narrate(&self) -> Result<StageOutput, PipelineError> {
        let st = Stage::Narrate;
        let mut warnings = Vec::new();
        let texts: Vec<SceneText> = match self.cfg.narrative.source {
            NarrativeSource::Deterministic => {
                let reports: Vec<KinematicsReport> = self.load(st, KINEMATICS_FILE)?;
                reports.par_iter().map(|r| render_narrative(r, &self.cfg.narrative.template)).collect()
            }
            NarrativeSource::Remote => {
                let segs = self.load_segments(st)?;
                let remote = &self.cfg.remote;
                let client =
                    HttpReasonerClient::from_settings(remote).map_err(|e| PipelineError::new(st.name(), None, e.to_string()))?;
                let limiter = remote.rate_limiter();
                let policy = remote.retry_policy();
                let cap = self.cfg.narrative.template.prompt_point_cap;
                let texts = par_map(&segs, |s| {
                    let fail = |m: String| PipelineError::new(st.name(), Some(s.id()), m);
                    let prompt = build_prompt(s, cap).map_err(|e| fail(e.to_string()))?;
                    remote_narrative(s.id(), &prompt, &remote.reasoner_model, &client, &policy, Some(&limiter))
                        .map(|a| a.value)
                        .map_err(|e| fail(e.to_string()))
                })?;
                warnings.extend(
                    texts.iter().filter(|t| t.degraded).map(|t| format!("narrative for {} lacks section headers", t.segment_id)),
                );
                texts
            }
        };
        Ok(StageOutput { files: vec![self.save_jsonl(st, NARRATIVES_FILE, &texts)?], warnings })
    }

    fn embed(&self) -> Result<StageOutput, PipelineError> {
        let st = Stage::Embed;
        let segs = self.load_segments(st)?;
        let texts: Vec<SceneText> = self.load(st, NARRATIVES_FILE)?;
        let by_id: BTreeMap<&str, &SceneText> = texts.iter().map(|t| (t.segment_id.as_str(), t)).collect();
        let e = &self.cfg.embedding;
        let read_sidecar = |s: &TrajectorySegment| -> Result<SceneSidecar, PipelineError> {
            let path = self.out.join(format!("{}.json", scene_stem(s.id())));
            let bytes = std::fs::read(&path).map_err(|_| {
                PipelineError::new(st.name(), Some(s.id()), SceneError::MissingSidecar(s.id().to_string()).to_string())
            })?;
            serde_json::from_slice(&bytes).map_err(|err| io_err(st, &path, err))
        };
        let text_of = |s: &TrajectorySegment| {
            by_id
                .get(s.id())
                .copied()
                .ok_or_else(|| PipelineError::new(st.name(), Some(s.id()), "no narrative for segment"))
        };
        let pairs: Vec<[ModalityEmbedding; 2]> = match e.embedder {
            EmbedderKind::Offline => {
                let osm = self.load_osm(st)?;
                par_map(&segs, |s| {
                    let fail = |m: String| PipelineError::new(st.name(), Some(s.id()), m);
                    let sidecar = read_sidecar(s)?;
                    let layers = extract_layers(&osm, &sidecar.bbox);
                    let img = embed_image_offline(&sidecar, s, &layers, e.dim, e.seed).map_err(|x| fail(x.to_string()))?;
                    let txt = embed_text_offline(text_of(s)?, e.dim, e.seed).map_err(|x| fail(x.to_string()))?;
                    Ok([img, txt])
                })?
            }
            EmbedderKind::Remote => {
                let remote = &self.cfg.remote;
                let client =
                    HttpEmbedClient::from_settings(remote).map_err(|x| PipelineError::new(st.name(), None, x.to_string()))?;
                let limiter = remote.rate_limiter();
                let policy = remote.retry_policy();
                par_map(&segs, |s| {
                    let fail = |m: String| PipelineError::new(st.name(), Some(s.id()), m);
                    read_sidecar(s)?;
                    let stem = scene_stem(s.id());
                    let png = self.out.join(format!("{stem}.png"));
                    let svg = self.out.join(format!("{stem}.svg"));
                    let bytes = std::fs::read(if png.is_file() { png } else { svg })
                        .map_err(|x| fail(x.to_string()))?;
                    let img_req = EmbedRequest::image(&remote.embed_model, &bytes);
                    let txt_req = EmbedRequest::text(&remote.embed_model, &text_of(s)?.full_text);
                    let img = embed_remote(s.id(), &img_req, e.dim, &client, &policy, Some(&limiter))
                        .map_err(|x| fail(x.to_string()))?;
                    let txt = embed_remote(s.id(), &txt_req, e.dim, &client, &policy, Some(&limiter))
                        .map_err(|x| fail(x.to_string()))?;
                    Ok([img.value, txt.value])
                })?
            }
        };
        let flat: Vec<ModalityEmbedding> = pairs.into_iter().flatten().collect();
        Ok(StageOutput { files: vec![self.save_jsonl(st, EMBEDDINGS_FILE, &flat)?], warnings: vec![] })
    }

    fn combine(&self) -> Result<StageOutput, PipelineError> {
        let st = Stage::Combine;
        let segs = self.load_segments(st)?;
        let embs: Vec<ModalityEmbedding> = self.load(st, EMBEDDINGS_FILE)?;
        let mut by_key: BTreeMap<(&str, Modality), &ModalityEmbedding> = BTreeMap::new();
        for m in &embs {
            by_key.insert((m.segment_id.as_str(), m.modality), m);
        }
        let mut out = Vec::with_capacity(segs.len() * CombineRule::ALL.len());
        for s in &segs {
            let img = by_key.get(&(s.id(), Modality::Image)).copied();
            let txt = by_key.get(&(s.id(), Modality::Text)).copied();
            for rule in CombineRule::ALL {
                out.push(
                    combine(img, txt, rule, s.mode())
                        .map_err(|e| PipelineError::new(st.name(), Some(s.id()), e.to_string()))?,
                );
            }
        }
        Ok(StageOutput { files: vec![self.save_jsonl(st, COMBINED_FILE, &out)?], warnings: vec![] })
    }

    fn combined_for_rule(&self, stage: Stage) -> Result<Vec<SceneEmbedding>, PipelineError> {
        let all: Vec<SceneEmbedding> = self.load(stage, COMBINED_FILE)?;
        let rule = self.cfg.embedding.combine_rule;
        Ok(all.into_iter().filter(|e| e.combine_rule == rule).collect())
    }

    fn train(&self) -> Result<StageOutput, PipelineError> {
        let st = Stage::Train;
        let data = self.combined_for_rule(st)?;
        let outcome = train(&data, &self.cfg.train).map_err(|e| PipelineError::new(st.name(), None, e.to_string()))?;
        let ckpt = Checkpoint::new(outcome.model, self.cfg.embedding.combine_rule, self.cfg.train.split_seed);
        let model = self.save_text(st, MODEL_FILE, &(ckpt.to_json() + "\n"))?;
        let log = self.save_json(st, TRAIN_LOG_FILE, &outcome.log)?;
        Ok(StageOutput { files: vec![model, log], warnings: vec![] })
    }

    fn eval(&self) -> Result<StageOutput, PipelineError> {
        let st = Stage::Eval;
        let fail = |m: String| PipelineError::new(st.name(), None, m);
        let model_path = self.out.join(MODEL_FILE);
        let text = std::fs::read_to_string(&model_path).map_err(|e| io_err(st, &model_path, e))?;
        let ckpt = Checkpoint::from_json(&text).map_err(|e| fail(e.to_string()))?;
        let log_path = self.out.join(TRAIN_LOG_FILE);
        let log: TrainLog = serde_json::from_slice(&std::fs::read(&log_path).map_err(|e| io_err(st, &log_path, e))?)
            .map_err(|e| io_err(st, &log_path, e))?;
        let data = self.combined_for_rule(st)?;
        let test_ids: BTreeSet<&str> = log.split.test.iter().map(String::as_str).collect();
        let test: Vec<Sample> = data
            .into_iter()
            .filter(|e| test_ids.contains(e.segment_id.as_str()))
            .map(|e| {
                let label = e.mode_label.ok_or_else(|| fail(format!("segment {} is unlabeled", e.segment_id)))?;
                Ok(Sample { id: e.segment_id, x: e.combined, label })
            })
            .collect::<Result<_, PipelineError>>()?;
        if test.len() != test_ids.len() {
            return Err(fail("test split references segments missing from the embedding store".into()));
        }
        let report: EvalReport = evaluate(&ckpt.model, &test).map_err(|e| fail(e.to_string()))?;
        let json = self.save_json(st, EVAL_JSON_FILE, &report)?;
        let txt = self.save_text(st, EVAL_TEXT_FILE, &report.to_text())?;
        Ok(StageOutput { files: vec![json, txt], warnings: vec![] })
    }

    fn ablate(&self) -> Result<StageOutput, PipelineError> {
        let st = Stage::Ablate;
        let all: Vec<SceneEmbedding> = self.load(st, COMBINED_FILE)?;
        let report = run_ablation(&all, &self.cfg.train).map_err(|e| PipelineError::new(st.name(), None, e.to_string()))?;
        let json = self.save_json(st, ABLATION_JSON_FILE, &report)?;
        let txt = self.save_text(st, ABLATION_TEXT_FILE, &report.to_text())?;
        Ok(StageOutput { files: vec![json, txt], warnings: vec![] })
    }
}
