use serde::{Deserialize, Serialize};

use super::{check_training, ClassifierError, Prediction, Result};
use crate::corpus::GroupLabel;
use crate::features::{FeatureMatrix, SparseRow};

/// Multinomial naive Bayes with additive smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub alpha: f64,
    /// `ln P(c)`, indexed by [`GroupLabel::index`].
    pub class_log_prior: [f64; 2],
    /// `ln P(t|c)` per class, per term.
    pub feature_log_prob: [Vec<f64>; 2],
}

/// `ln P(t|c) = ln((count(t,c) + α) / (Σ_t count(t,c) + α|V|))`, priors from
/// label frequencies.
pub fn nb_fit(x: &FeatureMatrix, labels: &[GroupLabel], alpha: f64) -> Result<NbModel> {
    check_training(x, labels)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ClassifierError::InvalidHyperparameter(format!(
            "alpha must be positive and finite, got {alpha}"
        )));
    }
    let n_terms = x.n_terms();
    let mut counts = [vec![0.0; n_terms], vec![0.0; n_terms]];
    let mut docs = [0usize; 2];
    for (row, label) in x.rows.iter().zip(labels) {
        let c = label.index();
        docs[c] += 1;
        for &(j, v) in row {
            counts[c][j] += v;
        }
    }
    for label in GroupLabel::BOTH {
        if docs[label.index()] == 0 {
            return Err(ClassifierError::EmptyClass(label));
        }
    }
    let n = labels.len() as f64;
    let class_log_prior = [(docs[0] as f64 / n).ln(), (docs[1] as f64 / n).ln()];
    let feature_log_prob = counts.map(|c| {
        let denom = c.iter().sum::<f64>() + alpha * n_terms as f64;
        c.iter().map(|&k| ((k + alpha) / denom).ln()).collect()
    });
    Ok(NbModel {
        alpha,
        class_log_prior,
        feature_log_prob,
    })
}

impl NbModel {
    pub fn n_terms(&self) -> usize {
        self.feature_log_prob[0].len()
    }

    /// Log prior plus count-weighted log likelihoods, per class.
    pub fn log_scores(&self, row: &SparseRow) -> [f64; 2] {
        let mut s = self.class_log_prior;
        for (c, score) in s.iter_mut().enumerate() {
            for &(j, v) in row {
                *score += v * self.feature_log_prob[c][j];
            }
        }
        s
    }

    pub fn predict(&self, row: &SparseRow) -> Prediction {
        let scores = self.log_scores(row);
        let label = if scores[0] >= scores[1] {
            GroupLabel::A
        } else {
            GroupLabel::B
        };
        Prediction { label, scores }
    }

    pub fn log_likelihood_gap(&self) -> Vec<f64> {
        self.feature_log_prob[0]
            .iter()
            .zip(&self.feature_log_prob[1])
            .map(|(a, b)| (a - b).abs())
            .collect()
    }
}
