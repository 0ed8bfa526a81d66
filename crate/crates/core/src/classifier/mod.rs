//! The travel-mode classifier: MLP, training, metrics and the ablation grid.

pub mod ablation;
pub mod metrics;
pub mod mlp;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::CombineRule;

pub use ablation::{run_ablation, AblationReport, AblationRow};
pub use metrics::{evaluate, EvalReport};
pub use mlp::{gradient_check, AdamState, MlpModel, Sample};
pub use train::{stratified_split, train, Optimizer, Split, TrainConfig, TrainLog, TrainOutcome};

pub const CHECKPOINT_FORMAT: &str = "trajscene-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("invalid model shape: {0}")]
    Shape(String),
    #[error("input has {got} features, model expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dataset has a single class")]
    SingleClass,
    #[error("segment {segment_id} has {got} features, expected {expected}")]
    MixedLengths { segment_id: String, expected: usize, got: usize },
    #[error("dataset mixes combine rules {0} and {1}")]
    MixedRules(CombineRule, CombineRule),
    #[error("segment {0} has no mode label")]
    Unlabeled(String),
    #[error("segment {0} appears twice")]
    DuplicateSegment(String),
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("embedding store lacks the {0} variant")]
    MissingVariant(CombineRule),
    #[error("variant {rule} is misaligned at segment {segment_id}")]
    Alignment { rule: CombineRule, segment_id: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Versioned, self-describing model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub combine_rule: CombineRule,
    pub split_seed: u64,
    pub model: MlpModel,
}

impl Checkpoint {
    pub fn new(model: MlpModel, combine_rule: CombineRule, split_seed: u64) -> Self {
        Self { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, combine_rule, split_seed, model }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ClassifierError> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| ClassifierError::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(ClassifierError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        c.model.validate()?;
        Ok(c)
    }
}
