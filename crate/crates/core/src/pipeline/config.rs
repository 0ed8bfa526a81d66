//! The TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::classifier::TrainConfig;
use crate::embedding::{CombineRule, MIN_DIM};
use crate::kinematics::KinematicsConfig;
use crate::narrative::NarrativeConfig;
use crate::preprocess::CleaningConfig;
use crate::remote::RemoteSettings;
use crate::scene::RenderStyle;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `Data/<user>/...`.
    pub geolife_root: PathBuf,
    pub osm_extract: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            geolife_root: PathBuf::from("corpus"),
            osm_extract: PathBuf::from("corpus/osm.xml"),
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NarrativeSource {
    Deterministic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarrativeStage {
    pub source: NarrativeSource,
    pub template: NarrativeConfig,
}

impl Default for NarrativeStage {
    fn default() -> Self {
        Self { source: NarrativeSource::Deterministic, template: NarrativeConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Offline,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingStage {
    pub embedder: EmbedderKind,
    /// Per-modality dimension.
    pub dim: usize,
    pub seed: u64,
    /// Rule used by `train` and `eval`; `combine` always writes all four.
    pub combine_rule: CombineRule,
}

impl Default for EmbeddingStage {
    fn default() -> Self {
        Self { embedder: EmbedderKind::Offline, dim: 256, seed: 42, combine_rule: CombineRule::Concatenation }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub cleaning: CleaningConfig,
    pub kinematics: KinematicsConfig,
    pub render: RenderStyle,
    pub narrative: NarrativeStage,
    pub embedding: EmbeddingStage,
    pub train: TrainConfig,
    pub remote: RemoteSettings,
    pub synth: SynthConfig,
}

impl PipelineConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn resolve_paths(&mut self, base_dir: &Path) {
        for p in [&mut self.paths.geolife_root, &mut self.paths.osm_extract, &mut self.paths.out_dir] {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
    }

    /// Seeds every stochastic stage from one value.
    pub fn apply_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.embedding.seed = seed;
        self.train.split_seed = seed;
        self.train.init_seed = seed.wrapping_add(1);
    }

    /// Checks numeric invariants of every section.
    pub fn validate_values(&self) -> Result<(), PipelineError> {
        self.cleaning.validate().map_err(|e| PipelineError::config(e.to_string()))?;
        self.kinematics.validate().map_err(|e| PipelineError::config(e.to_string()))?;
        self.render.validate().map_err(|e| PipelineError::config(e.to_string()))?;
        self.narrative.template.validate().map_err(|e| PipelineError::config(e.to_string()))?;
        self.train.validate().map_err(|e| PipelineError::config(e.to_string()))?;
        self.synth.validate().map_err(PipelineError::config)?;
        if self.embedding.dim < MIN_DIM {
            return Err(PipelineError::config(format!("embedding.dim must be >= {MIN_DIM}")));
        }
        if !(self.remote.timeout_s.is_finite() && self.remote.timeout_s > 0.0) {
            return Err(PipelineError::config("remote.timeout_s must be > 0"));
        }
        Ok(())
    }

    /// Value checks plus existence of the input paths.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.validate_values()?;
        if !self.paths.geolife_root.is_dir() {
            return Err(PipelineError::config(format!(
                "geolife_root {} is not a directory",
                self.paths.geolife_root.display()
            )));
        }
        if !self.paths.osm_extract.is_file() {
            return Err(PipelineError::config(format!(
                "osm_extract {} does not exist",
                self.paths.osm_extract.display()
            )));
        }
        Ok(())
    }

    pub fn uses_remote(&self) -> bool {
        self.narrative.source == NarrativeSource::Remote || self.embedding.embedder == EmbedderKind::Remote
    }

    /// Fails before any work when a remote stage lacks its token.
    pub fn preflight(&self) -> Result<(), PipelineError> {
        if self.uses_remote() {
            self.remote.token().map_err(|e| PipelineError::new("preflight", None, e.to_string()))?;
        }
        Ok(())
    }

    /// The config without machine-specific paths, for fingerprints.
    pub fn portable_snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("paths");
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml(&cfg.to_toml(), Path::new("")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_and_relative_paths() {
        let cfg = PipelineConfig::from_toml(
            "[paths]\nout_dir = \"run1\"\n[embedding]\ndim = 64\ncombine_rule = \"fusion\"\n[train]\nepochs = 3\n",
            Path::new("/tmp/base"),
        )
        .unwrap();
        assert_eq!(cfg.paths.out_dir, PathBuf::from("/tmp/base/run1"));
        assert_eq!(cfg.embedding.dim, 64);
        assert_eq!(cfg.embedding.combine_rule, CombineRule::Fusion);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 64);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(PipelineConfig::from_toml("[train]\nepoch = 3\n", Path::new("")).is_err());
        let cfg = PipelineConfig::from_toml("[embedding]\ndim = 4\n", Path::new("")).unwrap();
        assert!(cfg.validate_values().is_err());
        let missing = PipelineConfig::from_toml("[paths]\ngeolife_root = \"/nonexistent/x\"\n", Path::new("")).unwrap();
        assert!(missing.validate().is_err());
    }

    #[test]
    fn preflight_needs_token_only_for_remote() {
        let mut cfg = PipelineConfig::default();
        cfg.remote.token_env = "TRAJSCENE_PREFLIGHT_TEST_UNSET".into();
        assert!(cfg.preflight().is_ok());
        cfg.embedding.embedder = EmbedderKind::Remote;
        let err = cfg.preflight().unwrap_err();
        assert_eq!(err.stage, "preflight");
    }
}
