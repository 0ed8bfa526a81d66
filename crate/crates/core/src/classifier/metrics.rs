//! Confusion-matrix metrics with macro averaging over present classes.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{MlpModel, Sample};
use super::ClassifierError;
use crate::trajectory::Mode;

/// Rows are true modes, columns predicted modes, both in [`Mode::ALL`] order.
pub type Confusion = [[u64; Mode::COUNT]; Mode::COUNT];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub mode: Mode,
    pub support: u64,
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when the class has no test samples; such classes are left out
    /// of the macro averages.
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: Confusion,
    pub per_class: Vec<ClassMetrics>,
    pub absent_classes: Vec<Mode>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion) -> Result<Self, ClassifierError> {
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(ClassifierError::EmptyTestSet);
        }
        let trace: u64 = (0..Mode::COUNT).map(|k| confusion[k][k]).sum();
        let per_class: Vec<ClassMetrics> = Mode::ALL
            .iter()
            .map(|&mode| {
                let k = mode.index();
                let support: u64 = confusion[k].iter().sum();
                let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
                let tp = confusion[k][k];
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics { mode, support, predicted, precision, recall, f1, present: support > 0 }
            })
            .collect();
        let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.present).collect();
        let mean = |f: fn(&ClassMetrics) -> f64| present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64;
        Ok(Self {
            total,
            accuracy: trace as f64 / total as f64,
            macro_precision: mean(|c| c.precision),
            macro_recall: mean(|c| c.recall),
            macro_f1: mean(|c| c.f1),
            absent_classes: per_class.iter().filter(|c| !c.present).map(|c| c.mode).collect(),
            confusion,
            per_class,
        })
    }

    pub fn trace(&self) -> u64 {
        (0..Mode::COUNT).map(|k| self.confusion[k][k]).sum()
    }

    /// Aligned plain-text rendering: headline metrics, per-class table and
    /// the confusion matrix.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pct = |x: f64| format!("{:.1}", 100.0 * x);
        let _ = writeln!(s, "{:<10} {:>8} {:>14} {:>11} {:>12}", "", "Acc (%)", "Precision (%)", "Recall (%)", "F-Score (%)");
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>14} {:>11} {:>12}",
            "macro",
            pct(self.accuracy),
            pct(self.macro_precision),
            pct(self.macro_recall),
            pct(self.macro_f1)
        );
        let _ = writeln!(s, "\n{:<10} {:>8} {:>14} {:>11} {:>12}", "class", "support", "precision", "recall", "f1");
        for c in &self.per_class {
            let flag = if c.present { "" } else { "  (absent)" };
            let _ = writeln!(
                s,
                "{:<10} {:>8} {:>14.4} {:>11.4} {:>12.4}{flag}",
                c.mode.as_str(),
                c.support,
                c.precision,
                c.recall,
                c.f1
            );
        }
        let _ = write!(s, "\nconfusion (rows true, columns predicted)\n{:<10}", "");
        for m in Mode::ALL {
            let _ = write!(s, " {:>7}", m.as_str());
        }
        s.push('\n');
        for m in Mode::ALL {
            let _ = write!(s, "{:<10}", m.as_str());
            for v in self.confusion[m.index()] {
                let _ = write!(s, " {v:>7}");
            }
            s.push('\n');
        }
        s
    }
}

/// Predicts every sample (in parallel, merged in input order) and scores.
pub fn evaluate(model: &MlpModel, test: &[Sample]) -> Result<EvalReport, ClassifierError> {
    if test.is_empty() {
        return Err(ClassifierError::EmptyTestSet);
    }
    let predictions: Vec<Mode> = test.par_iter().map(|s| model.predict(&s.x)).collect::<Result<_, _>>()?;
    let mut confusion = [[0u64; Mode::COUNT]; Mode::COUNT];
    for (s, p) in test.iter().zip(predictions) {
        confusion[s.label.index()][p.index()] += 1;
    }
    EvalReport::from_confusion(confusion)
}
