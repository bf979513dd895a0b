//! Group-sensitive tf-idf discounting.
//!
//! For each term the mean tf-idf weight is taken separately over group A and
//! group B documents. The gap between the two means, as a percentage of the
//! larger one, is compared against a threshold `θ`; terms at or under it keep
//! their full weight and terms over it are scaled by `1 / (1 + e^(k (Δ - θ)))`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    vectorize, FeatureError, FeatureMatrix, Result, Scheme, SparseRow, Tokenizer, Vocabulary,
    Weighting,
};
use crate::corpus::{Corpus, GroupLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessWeights {
    /// Percentage gap between the group means, per term.
    pub deltas: Vec<f64>,
    /// Column multipliers in `(0, 1]`.
    pub multipliers: Vec<f64>,
    pub threshold: f64,
    pub steepness: f64,
}

impl FairnessWeights {
    pub fn multiplier(delta: f64, threshold: f64, steepness: f64) -> f64 {
        if delta <= threshold {
            1.0
        } else {
            (1.0 / (1.0 + (steepness * (delta - threshold)).exp())).max(f64::MIN_POSITIVE)
        }
    }

    pub(crate) fn scale_row(&self, row: &mut SparseRow) {
        for (j, v) in row.iter_mut() {
            *v *= self.multipliers[*j];
        }
    }

    /// Multiplies every column of a tf-idf matrix by its term multiplier.
    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        if matrix.n_terms() != self.multipliers.len() {
            return Err(FeatureError::VocabMismatch {
                expected: self.multipliers.len(),
                actual: matrix.n_terms(),
            });
        }
        let mut out = matrix.clone();
        for row in out.rows.iter_mut() {
            self.scale_row(row);
        }
        out.weighting = Weighting::FairTfidf;
        Ok(out)
    }
}

/// Computes per-term multipliers from `corpus`. `threshold` is a percentage
/// (20 means 20 %); `f64::INFINITY` disables discounting.
pub fn fair_weights(
    corpus: &Corpus,
    vocab: &Arc<Vocabulary>,
    tokenizer: &Tokenizer,
    threshold: f64,
    steepness: f64,
) -> Result<FairnessWeights> {
    let m = vectorize(corpus, vocab, tokenizer, Scheme::Tfidf);
    let mut sums = [vec![0.0; vocab.len()], vec![0.0; vocab.len()]];
    let mut sizes = [0usize; 2];
    for (doc, row) in corpus.iter().zip(&m.rows) {
        let g = doc.group.index();
        sizes[g] += 1;
        for &(j, v) in row {
            sums[g][j] += v;
        }
    }
    for label in GroupLabel::BOTH {
        if sizes[label.index()] == 0 {
            return Err(FeatureError::GroupAbsent(label));
        }
    }
    let mut deltas = Vec::with_capacity(vocab.len());
    for (j, (sa, sb)) in sums[0].iter().zip(&sums[1]).enumerate() {
        let a = sa / sizes[0] as f64;
        let b = sb / sizes[1] as f64;
        let larger = a.max(b);
        if larger <= 0.0 {
            return Err(FeatureError::TermAbsent(vocab.term(j).to_string()));
        }
        deltas.push((a - b).abs() / larger * 100.0);
    }
    let multipliers = deltas
        .iter()
        .map(|&d| FairnessWeights::multiplier(d, threshold, steepness))
        .collect();
    Ok(FairnessWeights {
        deltas,
        multipliers,
        threshold,
        steepness,
    })
}
