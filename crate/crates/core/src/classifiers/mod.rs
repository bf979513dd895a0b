//! Proxy classifiers that try to recover the sensitive attribute from text.
//!
//! Both models are binary over [`GroupLabel`] and break exact ties towards
//! group A.

mod forest;
mod grid;
mod metrics;
mod naive_bayes;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::GroupLabel;
use crate::features::{FeatureMatrix, SparseRow};

pub use forest::{rf_fit, Node, RfModel, Tree};
pub use grid::{grid_search, stratified_folds, CvRow, GridResult, GridSpec, SelectionMetric};
pub use metrics::{evaluate, Confusion, EvalReport};
pub use naive_bayes::{nb_fit, NbModel};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("class {0} has no training documents")]
    EmptyClass(GroupLabel),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("cannot build {folds} folds: {reason}")]
    FoldConstruction { folds: usize, reason: String },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("model expects {expected} terms, matrix has {actual}")]
    VocabMismatch { expected: usize, actual: usize },
}

pub type Result<T, E = ClassifierError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NaiveBayes,
    RandomForest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::NaiveBayes, ModelKind::RandomForest];
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::NaiveBayes => "naive_bayes",
            ModelKind::RandomForest => "random_forest",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparams {
    NaiveBayes {
        alpha: f64,
    },
    RandomForest {
        n_trees: usize,
        /// `None` grows until leaves are pure or too small to split.
        max_depth: Option<usize>,
        /// `None` means `ceil(sqrt(n_terms))`.
        features_per_split: Option<usize>,
    },
}

impl Hyperparams {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::NaiveBayes { .. } => ModelKind::NaiveBayes,
            Hyperparams::RandomForest { .. } => ModelKind::RandomForest,
        }
    }

    pub fn fit(&self, x: &FeatureMatrix, labels: &[GroupLabel], seed: u64) -> Result<TrainedModel> {
        Ok(match *self {
            Hyperparams::NaiveBayes { alpha } => {
                TrainedModel::NaiveBayes(nb_fit(x, labels, alpha)?)
            }
            Hyperparams::RandomForest {
                n_trees,
                max_depth,
                features_per_split,
            } => TrainedModel::RandomForest(rf_fit(
                x,
                labels,
                n_trees,
                max_depth,
                features_per_split,
                seed,
            )?),
        })
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyperparams::NaiveBayes { alpha } => write!(f, "alpha={alpha}"),
            Hyperparams::RandomForest {
                n_trees,
                max_depth,
                features_per_split,
            } => {
                write!(f, "n_trees={n_trees} max_depth=")?;
                match max_depth {
                    Some(d) => write!(f, "{d}")?,
                    None => f.write_str("unlimited")?,
                }
                if let Some(m) = features_per_split {
                    write!(f, " features_per_split={m}")?;
                }
                Ok(())
            }
        }
    }
}

/// A predicted label with per-class scores: log posteriors (up to a shared
/// constant) for naive Bayes, vote fractions for the forest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: GroupLabel,
    pub scores: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    NaiveBayes(NbModel),
    RandomForest(RfModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::NaiveBayes(_) => ModelKind::NaiveBayes,
            TrainedModel::RandomForest(_) => ModelKind::RandomForest,
        }
    }

    pub fn n_terms(&self) -> usize {
        match self {
            TrainedModel::NaiveBayes(m) => m.n_terms(),
            TrainedModel::RandomForest(m) => m.n_terms,
        }
    }

    pub fn predict(&self, row: &SparseRow) -> Prediction {
        match self {
            TrainedModel::NaiveBayes(m) => m.predict(row),
            TrainedModel::RandomForest(m) => m.predict(row),
        }
    }

    pub fn predict_all(&self, x: &FeatureMatrix) -> Result<Vec<GroupLabel>> {
        if x.n_terms() != self.n_terms() {
            return Err(ClassifierError::VocabMismatch {
                expected: self.n_terms(),
                actual: x.n_terms(),
            });
        }
        Ok(x.rows.iter().map(|r| self.predict(r).label).collect())
    }

    /// Per-term importance used for model rankings.
    pub fn term_importance(&self) -> Vec<f64> {
        match self {
            TrainedModel::NaiveBayes(m) => m.log_likelihood_gap(),
            TrainedModel::RandomForest(m) => m.importances.clone(),
        }
    }
}

pub(crate) fn check_training(x: &FeatureMatrix, labels: &[GroupLabel]) -> Result<()> {
    if x.n_docs() != labels.len() {
        return Err(ClassifierError::LengthMismatch {
            rows: x.n_docs(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    Ok(())
}
