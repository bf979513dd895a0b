use serde::{Deserialize, Serialize};

use super::{ClassifierError, Result, TrainedModel};
use crate::corpus::GroupLabel;
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Test-set metrics with group A as the positive class. Precision, recall
/// and F1 are 0 when their denominators vanish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub positive_class: GroupLabel,
    pub confusion: Confusion,
    /// Per test document, in test order.
    pub correctness: Vec<bool>,
    pub predictions: Vec<GroupLabel>,
}

impl EvalReport {
    pub fn from_predictions(
        predictions: Vec<GroupLabel>,
        truth: &[GroupLabel],
    ) -> Result<EvalReport> {
        if predictions.len() != truth.len() {
            return Err(ClassifierError::LengthMismatch {
                rows: predictions.len(),
                labels: truth.len(),
            });
        }
        if truth.is_empty() {
            return Err(ClassifierError::EmptyTestSet);
        }
        let positive = GroupLabel::A;
        let mut c = Confusion::default();
        for (p, t) in predictions.iter().zip(truth) {
            match (*p == positive, *t == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let correctness: Vec<bool> = predictions.iter().zip(truth).map(|(p, t)| p == t).collect();
        Ok(EvalReport {
            accuracy: ratio(c.tp + c.tn, c.total()),
            f1,
            precision,
            recall,
            positive_class: positive,
            confusion: c,
            correctness,
            predictions,
        })
    }

    /// Checks the stored numbers are mutually consistent and in range.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("accuracy", self.accuracy),
            ("f1", self.f1),
            ("precision", self.precision),
            ("recall", self.recall),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        let c = &self.confusion;
        if c.total() != self.correctness.len() {
            return Err("confusion counts do not match the correctness vector".into());
        }
        let acc = (c.tp + c.tn) as f64 / c.total().max(1) as f64;
        if (acc - self.accuracy).abs() > 1e-9 {
            return Err(format!(
                "accuracy {} disagrees with confusion counts",
                self.accuracy
            ));
        }
        Ok(())
    }
}

pub fn evaluate(
    model: &TrainedModel,
    test: &FeatureMatrix,
    labels: &[GroupLabel],
) -> Result<EvalReport> {
    if test.n_docs() == 0 {
        return Err(ClassifierError::EmptyTestSet);
    }
    if test.n_docs() != labels.len() {
        return Err(ClassifierError::LengthMismatch {
            rows: test.n_docs(),
            labels: labels.len(),
        });
    }
    EvalReport::from_predictions(model.predict_all(test)?, labels)
}
