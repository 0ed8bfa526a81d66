//! Stratified splitting and mini-batch gradient descent.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, EvalReport};
use super::mlp::{AdamState, MlpModel, Sample};
use super::ClassifierError;
use crate::embedding::{CombineRule, SceneEmbedding};
use crate::trajectory::Mode;

/// Update rule applied to each mini-batch gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub split_seed: u64,
    /// Seeds weight initialization and epoch shuffling.
    pub init_seed: u64,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![128],
            optimizer: Optimizer::Adam,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 50,
            l2_penalty: 1e-4,
            split_seed: 7,
            init_seed: 11,
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::Config(m.to_string()));
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return bad("split fractions must be positive");
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split fractions must sum to 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be >= 1");
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return bad("l2_penalty must be >= 0");
        }
        if self.hidden_dims.contains(&0) {
            return bad("hidden layer widths must be >= 1");
        }
        Ok(())
    }
}

/// Segment ids per partition, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Per mode: sort ids, shuffle with `split_seed`, then cut by fraction.
/// Membership depends only on ids, labels and the seed.
pub fn stratified_split(labels: &[(String, Mode)], cfg: &TrainConfig) -> Split {
    let mut by_mode: BTreeMap<Mode, Vec<&str>> = BTreeMap::new();
    for (id, m) in labels {
        by_mode.entry(*m).or_default().push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.split_seed);
    let mut split = Split { train: vec![], val: vec![], test: vec![] };
    for (_, mut ids) in by_mode {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_test = ((n as f64 * cfg.test_frac).round() as usize).min(n);
        let n_val = ((n as f64 * cfg.val_frac).round() as usize).min(n - n_test);
        let (test, rest) = ids.split_at(n_test);
        let (val, train) = rest.split_at(n_val);
        split.test.extend(test.iter().map(|s| s.to_string()));
        split.val.extend(val.iter().map(|s| s.to_string()));
        split.train.extend(train.iter().map(|s| s.to_string()));
    }
    split.train.sort();
    split.val.sort();
    split.test.sort();
    split
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy on the training partition after the epoch's updates.
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub combine_rule: CombineRule,
    pub input_dim: usize,
    pub split: Split,
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub log: TrainLog,
    pub test: Vec<Sample>,
}

/// Turns labeled embeddings into samples, checking they are homogeneous.
pub fn samples_from(dataset: &[SceneEmbedding]) -> Result<(Vec<Sample>, CombineRule), ClassifierError> {
    let first = dataset.first().ok_or(ClassifierError::EmptyDataset)?;
    let (dim, rule) = (first.combined.len(), first.combine_rule);
    let mut out = Vec::with_capacity(dataset.len());
    for e in dataset {
        if e.combined.len() != dim {
            return Err(ClassifierError::MixedLengths { segment_id: e.segment_id.clone(), expected: dim, got: e.combined.len() });
        }
        if e.combine_rule != rule {
            return Err(ClassifierError::MixedRules(rule, e.combine_rule));
        }
        let label = e.mode_label.ok_or_else(|| ClassifierError::Unlabeled(e.segment_id.clone()))?;
        out.push(Sample { id: e.segment_id.clone(), x: e.combined.clone(), label });
    }
    Ok((out, rule))
}

fn pick(pool: &BTreeMap<&str, &Sample>, ids: &[String]) -> Vec<Sample> {
    ids.iter().map(|id| (*pool[id.as_str()]).clone()).collect()
}

/// Splits, trains with mini-batch gradient descent and keeps the epoch
/// with the best validation macro-F1 (earliest on ties).
pub fn train(dataset: &[SceneEmbedding], cfg: &TrainConfig) -> Result<TrainOutcome, ClassifierError> {
    cfg.validate()?;
    let (samples, rule) = samples_from(dataset)?;
    let classes: std::collections::BTreeSet<Mode> = samples.iter().map(|s| s.label).collect();
    if classes.len() < 2 {
        return Err(ClassifierError::SingleClass);
    }
    let mut pool: BTreeMap<&str, &Sample> = BTreeMap::new();
    for s in &samples {
        if pool.insert(&s.id, s).is_some() {
            return Err(ClassifierError::DuplicateSegment(s.id.clone()));
        }
    }
    let labels: Vec<(String, Mode)> = samples.iter().map(|s| (s.id.clone(), s.label)).collect();
    let split = stratified_split(&labels, cfg);
    let mut train_set = pick(&pool, &split.train);
    let val_set = pick(&pool, &split.val);
    let test = pick(&pool, &split.test);
    if train_set.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    // Without validation data, selection falls back to the training set.
    let selection_set = if val_set.is_empty() { train_set.clone() } else { val_set };

    let input_dim = samples[0].x.len();
    let mut dims = vec![input_dim];
    dims.extend(&cfg.hidden_dims);
    dims.push(Mode::COUNT);
    let mut model = MlpModel::he_init(&dims, cfg.init_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed ^ 0x5eed_5eed_5eed_5eed);
    let mut adam = AdamState::new(&model);

    let mut best: Option<(MlpModel, usize, f64)> = None;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        train_set.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in train_set.chunks(cfg.batch_size) {
            loss_sum += model.loss(batch, cfg.l2_penalty)? * batch.len() as f64;
            let g = model.gradients(batch, cfg.l2_penalty)?;
            match cfg.optimizer {
                Optimizer::Sgd => model.apply(&g, cfg.learning_rate),
                Optimizer::Adam => adam.apply(&mut model, &g, cfg.learning_rate),
            }
        }
        let report: EvalReport = evaluate(&model, &selection_set)?;
        epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: evaluate(&model, &train_set)?.accuracy,
            val_accuracy: report.accuracy,
            val_macro_f1: report.macro_f1,
        });
        if best.as_ref().is_none_or(|(_, _, f)| report.macro_f1 > *f) {
            best = Some((model.clone(), epoch, report.macro_f1));
        }
    }
    let (model, best_epoch, best_val_macro_f1) = best.expect("epochs >= 1");
    tracing::debug!(rule = %rule, best_epoch, best_val_macro_f1, "training finished");
    Ok(TrainOutcome {
        model,
        log: TrainLog { combine_rule: rule, input_dim, split, epochs, best_epoch, best_val_macro_f1 },
        test,
    })
}
