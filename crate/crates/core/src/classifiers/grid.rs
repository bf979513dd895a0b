use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, ClassifierError, EvalReport, Hyperparams, ModelKind, Result};
use crate::corpus::GroupLabel;
use crate::features::FeatureMatrix;
use crate::rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    Accuracy,
    F1,
}

impl SelectionMetric {
    pub fn of(&self, report: &EvalReport) -> f64 {
        match self {
            SelectionMetric::Accuracy => report.accuracy,
            SelectionMetric::F1 => report.f1,
        }
    }
}

fn default_folds() -> usize {
    5
}

/// Candidate values per hyperparameter. `null` stands for "unlimited" /
/// "use the default" (e.g. `max_depth`, `features_per_split`). Points are
/// enumerated with the first listed parameter varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub params: IndexMap<String, Vec<Option<f64>>>,
    #[serde(default)]
    pub metric: SelectionMetric,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GridSpec {
    pub fn default_for(kind: ModelKind) -> GridSpec {
        let mut params = IndexMap::new();
        match kind {
            ModelKind::NaiveBayes => {
                params.insert(
                    "alpha".into(),
                    vec![Some(0.1), Some(0.5), Some(1.0), Some(2.0)],
                );
            }
            ModelKind::RandomForest => {
                params.insert("n_trees".into(), vec![Some(100.0), Some(300.0)]);
                params.insert("max_depth".into(), vec![Some(8.0), Some(16.0), None]);
            }
        }
        GridSpec {
            params,
            metric: SelectionMetric::Accuracy,
            cv_folds: default_folds(),
            seed: 0,
        }
    }

    pub fn points(&self) -> Vec<IndexMap<String, Option<f64>>> {
        let mut points = vec![IndexMap::new()];
        for (name, values) in &self.params {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(name.clone(), *v);
                        q
                    })
                })
                .collect();
        }
        if self.params.is_empty() {
            points.clear();
        }
        points
    }

    pub fn hyperparams(&self, kind: ModelKind) -> Result<Vec<Hyperparams>> {
        let points = self.points();
        if points.is_empty() {
            return Err(ClassifierError::EmptyGrid);
        }
        points.iter().map(|p| hyperparams_at(kind, p)).collect()
    }
}

fn as_count(name: &str, v: Option<f64>) -> Result<Option<usize>> {
    match v {
        None => Ok(None),
        Some(x) if x >= 1.0 && x.fract() == 0.0 && x.is_finite() => Ok(Some(x as usize)),
        Some(x) => Err(ClassifierError::InvalidHyperparameter(format!(
            "{name} must be a positive integer, got {x}"
        ))),
    }
}

fn hyperparams_at(kind: ModelKind, point: &IndexMap<String, Option<f64>>) -> Result<Hyperparams> {
    let allowed: &[&str] = match kind {
        ModelKind::NaiveBayes => &["alpha"],
        ModelKind::RandomForest => &["n_trees", "max_depth", "features_per_split"],
    };
    if let Some(unknown) = point.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(ClassifierError::InvalidHyperparameter(format!(
            "`{unknown}` is not a {kind} hyperparameter"
        )));
    }
    Ok(match kind {
        ModelKind::NaiveBayes => {
            let alpha = point.get("alpha").copied().flatten().ok_or_else(|| {
                ClassifierError::InvalidHyperparameter("alpha needs a numeric value".into())
            })?;
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(ClassifierError::InvalidHyperparameter(format!(
                    "alpha must be > 0, got {alpha}"
                )));
            }
            Hyperparams::NaiveBayes { alpha }
        }
        ModelKind::RandomForest => Hyperparams::RandomForest {
            n_trees: as_count(
                "n_trees",
                point.get("n_trees").copied().unwrap_or(Some(100.0)),
            )?
            .ok_or_else(|| {
                ClassifierError::InvalidHyperparameter("n_trees cannot be null".into())
            })?,
            max_depth: as_count("max_depth", point.get("max_depth").copied().flatten())?,
            features_per_split: as_count(
                "features_per_split",
                point.get("features_per_split").copied().flatten(),
            )?,
        },
    })
}

/// Test-fold positions for stratified k-fold CV. Each class is shuffled and
/// dealt round-robin, so every fold holds at least one document per class.
pub fn stratified_folds(labels: &[GroupLabel], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(ClassifierError::FoldConstruction {
            folds: k,
            reason: "need at least 2 folds".into(),
        });
    }
    let mut rng = rng::seeded(seed);
    let mut folds = vec![Vec::new(); k];
    for label in GroupLabel::BOTH {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if members.len() < k {
            return Err(ClassifierError::FoldConstruction {
                folds: k,
                reason: format!("class {label} has only {} documents", members.len()),
            });
        }
        rng::shuffle(&mut rng, &mut members);
        for (pos, i) in members.into_iter().enumerate() {
            folds[pos % k].push(i);
        }
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub params: Hyperparams,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Hyperparams,
    pub best_index: usize,
    pub metric: SelectionMetric,
    pub table: Vec<CvRow>,
}

/// Stratified k-fold search. The winner has the highest mean score; among
/// equal means the earliest grid point wins. Fold `f` trains with seed
/// `derive_seed(grid.seed, f)`.
pub fn grid_search(
    x: &FeatureMatrix,
    labels: &[GroupLabel],
    kind: ModelKind,
    grid: &GridSpec,
) -> Result<GridResult> {
    super::check_training(x, labels)?;
    let candidates = grid.hyperparams(kind)?;
    let folds = stratified_folds(labels, grid.cv_folds, grid.seed)?;
    let splits: Vec<(
        FeatureMatrix,
        Vec<GroupLabel>,
        FeatureMatrix,
        Vec<GroupLabel>,
    )> = folds
        .iter()
        .map(|test| {
            let mut is_test = vec![false; labels.len()];
            test.iter().for_each(|&i| is_test[i] = true);
            let train: Vec<usize> = (0..labels.len()).filter(|&i| !is_test[i]).collect();
            (
                x.take_rows(&train),
                train.iter().map(|&i| labels[i]).collect(),
                x.take_rows(test),
                test.iter().map(|&i| labels[i]).collect(),
            )
        })
        .collect();

    let table = candidates
        .par_iter()
        .map(|params| {
            let fold_scores = splits
                .iter()
                .enumerate()
                .map(|(f, (xtr, ytr, xte, yte))| {
                    let model = params.fit(xtr, ytr, rng::derive_seed(grid.seed, f as u64))?;
                    Ok(grid.metric.of(&evaluate(&model, xte, yte)?))
                })
                .collect::<Result<Vec<f64>>>()?;
            let n = fold_scores.len() as f64;
            let mean = fold_scores.iter().sum::<f64>() / n;
            let std = (fold_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
            Ok(CvRow {
                params: *params,
                fold_scores,
                mean,
                std,
            })
        })
        .collect::<Result<Vec<CvRow>>>()?;

    let mut best_index = 0;
    for (i, row) in table.iter().enumerate() {
        if row.mean > table[best_index].mean {
            best_index = i;
        }
    }
    Ok(GridResult {
        best: table[best_index].params,
        best_index,
        metric: grid.metric,
        table,
    })
}
