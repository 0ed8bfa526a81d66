//! One model per combination rule, all on the same split.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, EvalReport};
use super::train::{train, TrainConfig};
use super::ClassifierError;
use crate::embedding::{CombineRule, SceneEmbedding};
use crate::trajectory::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub rule: CombineRule,
    pub input_dim: usize,
    pub best_epoch: usize,
    pub test_ids: Vec<String>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

fn row_label(rule: CombineRule) -> &'static str {
    match rule {
        CombineRule::ImageOnly => "image only (w/o text)",
        CombineRule::TextOnly => "text only (w/o image)",
        CombineRule::Fusion => "fusion",
        CombineRule::Concatenation => "concatenation",
    }
}

impl AblationReport {
    pub fn row(&self, rule: CombineRule) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.rule == rule)
    }

    /// Four-column percentage table, one row per rule.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:>5} {:>8} {:>14} {:>11} {:>12}",
            "Method", "dim", "Acc (%)", "Precision (%)", "Recall (%)", "F-Score (%)"
        );
        for r in &self.rows {
            let p = |x: f64| format!("{:.1}", 100.0 * x);
            let _ = writeln!(
                s,
                "{:<24} {:>5} {:>8} {:>14} {:>11} {:>12}",
                row_label(r.rule),
                r.input_dim,
                p(r.report.accuracy),
                p(r.report.macro_precision),
                p(r.report.macro_recall),
                p(r.report.macro_f1)
            );
        }
        s
    }
}

/// Groups a mixed store by rule and checks every rule covers the same
/// segments with the same labels.
pub fn group_variants(
    store: &[SceneEmbedding],
) -> Result<BTreeMap<CombineRule, Vec<SceneEmbedding>>, ClassifierError> {
    let mut groups: BTreeMap<CombineRule, Vec<SceneEmbedding>> = BTreeMap::new();
    for e in store {
        groups.entry(e.combine_rule).or_default().push(e.clone());
    }
    for rule in CombineRule::ALL {
        if !groups.contains_key(&rule) {
            return Err(ClassifierError::MissingVariant(rule));
        }
    }
    let labels = |v: &[SceneEmbedding]| -> BTreeMap<String, Option<Mode>> {
        v.iter().map(|e| (e.segment_id.clone(), e.mode_label)).collect()
    };
    let all_ids: BTreeSet<String> = store.iter().map(|e| e.segment_id.clone()).collect();
    let reference = labels(&groups[&CombineRule::Concatenation]);
    for (rule, v) in &groups {
        let these = labels(v);
        if let Some(missing) = all_ids.iter().find(|id| !these.contains_key(*id)) {
            return Err(ClassifierError::Alignment { rule: *rule, segment_id: missing.clone() });
        }
        if let Some((id, _)) = these.iter().find(|(id, l)| reference.get(*id) != Some(l)) {
            return Err(ClassifierError::Alignment { rule: *rule, segment_id: id.clone() });
        }
    }
    Ok(groups)
}

/// Trains and evaluates one model per rule. Rows follow
/// [`CombineRule::ALL`]; the split depends only on ids, labels and
/// `split_seed`, so all rows share test membership.
pub fn run_ablation(store: &[SceneEmbedding], cfg: &TrainConfig) -> Result<AblationReport, ClassifierError> {
    let groups = group_variants(store)?;
    let rows = CombineRule::ALL
        .par_iter()
        .map(|rule| {
            let out = train(&groups[rule], cfg)?;
            let report = evaluate(&out.model, &out.test)?;
            Ok(AblationRow {
                rule: *rule,
                input_dim: out.log.input_dim,
                best_epoch: out.log.best_epoch,
                test_ids: out.log.split.test,
                report,
            })
        })
        .collect::<Result<Vec<_>, ClassifierError>>()?;
    Ok(AblationReport { rows })
}
