//! Random forest of CART trees split on Gini impurity decrease.
//!
//! Each tree sees a bootstrap resample drawn from its own stream
//! (`derive_seed(seed, tree_index)`), so parallel and sequential training
//! give the same forest. At every node features are drawn without
//! replacement until `features_per_split` non-constant ones have been
//! scored; the best gain wins, ties going to the lowest feature index and
//! then the lowest threshold. Thresholds sit at midpoints between adjacent
//! distinct values and samples with `value <= threshold` go left.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training, ClassifierError, Prediction, Result};
use crate::corpus::GroupLabel;
use crate::features::{FeatureMatrix, SparseRow};
use crate::rng::{self, Rng};

const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [usize; 2],
    },
}

/// Nodes in preorder; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

fn value_at(row: &SparseRow, feature: usize) -> f64 {
    row.binary_search_by_key(&feature, |&(j, _)| j)
        .map(|p| row[p].1)
        .unwrap_or(0.0)
}

fn majority(counts: [usize; 2]) -> GroupLabel {
    if counts[0] >= counts[1] {
        GroupLabel::A
    } else {
        GroupLabel::B
    }
}

impl Tree {
    pub fn leaf_counts(&self, row: &SparseRow) -> [usize; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if value_at(row, *feature) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn predict(&self, row: &SparseRow) -> GroupLabel {
        majority(self.leaf_counts(row))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub trees: Vec<Tree>,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub features_per_split: usize,
    pub seed: u64,
    pub n_terms: usize,
    /// Mean normalized impurity decrease per term.
    pub importances: Vec<f64>,
}

impl RfModel {
    /// Majority vote; scores are vote fractions and a split vote goes to A.
    pub fn predict(&self, row: &SparseRow) -> Prediction {
        let votes_a = self
            .trees
            .iter()
            .filter(|t| t.predict(row) == GroupLabel::A)
            .count();
        let n = self.trees.len() as f64;
        let a = votes_a as f64 / n;
        let scores = [a, 1.0 - a];
        let label = if votes_a * 2 >= self.trees.len() {
            GroupLabel::A
        } else {
            GroupLabel::B
        };
        Prediction { label, scores }
    }
}

pub fn rf_fit(
    x: &FeatureMatrix,
    labels: &[GroupLabel],
    n_trees: usize,
    max_depth: Option<usize>,
    features_per_split: Option<usize>,
    seed: u64,
) -> Result<RfModel> {
    check_training(x, labels)?;
    if n_trees == 0 {
        return Err(ClassifierError::InvalidHyperparameter(
            "n_trees must be at least 1".into(),
        ));
    }
    if features_per_split == Some(0) {
        return Err(ClassifierError::InvalidHyperparameter(
            "features_per_split must be at least 1".into(),
        ));
    }
    let n_terms = x.n_terms();
    let mtry = features_per_split
        .unwrap_or_else(|| (n_terms as f64).sqrt().ceil() as usize)
        .clamp(1, n_terms.max(1));

    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_terms];
    for (i, row) in x.rows.iter().enumerate() {
        for &(j, v) in row {
            if v != 0.0 {
                columns[j].push((i, v));
            }
        }
    }

    let grown: Vec<(Tree, Vec<f64>)> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut builder = TreeBuilder {
                rows: &x.rows,
                columns: &columns,
                labels,
                max_depth,
                mtry,
                rng: rng::seeded(rng::derive_seed(seed, t as u64)),
                nodes: Vec::new(),
                importance: vec![0.0; n_terms],
                multiplicity: vec![0; labels.len()],
                feature_order: (0..n_terms).collect(),
                n_root: labels.len() as f64,
            };
            let n = labels.len();
            let sample: Vec<usize> = (0..n).map(|_| rng::below(&mut builder.rng, n)).collect();
            builder.grow(sample, 0);
            let total: f64 = builder.importance.iter().sum();
            if total > 0.0 {
                builder.importance.iter_mut().for_each(|v| *v /= total);
            }
            (
                Tree {
                    nodes: builder.nodes,
                },
                builder.importance,
            )
        })
        .collect();

    let mut importances = vec![0.0; n_terms];
    for (_, imp) in &grown {
        for (acc, v) in importances.iter_mut().zip(imp) {
            *acc += v;
        }
    }
    importances.iter_mut().for_each(|v| *v /= n_trees as f64);
    Ok(RfModel {
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        n_trees,
        max_depth,
        features_per_split: mtry,
        seed,
        n_terms,
        importances,
    })
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (pa, pb) = (counts[0] as f64 / n, counts[1] as f64 / n);
    1.0 - pa * pa - pb * pb
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct TreeBuilder<'a> {
    rows: &'a [SparseRow],
    columns: &'a [Vec<(usize, f64)>],
    labels: &'a [GroupLabel],
    max_depth: Option<usize>,
    mtry: usize,
    rng: Rng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    multiplicity: Vec<u32>,
    feature_order: Vec<usize>,
    n_root: f64,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, sample: Vec<usize>, depth: usize) -> usize {
        let mut counts = [0usize; 2];
        for &i in &sample {
            counts[self.labels[i].index()] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_reached = self.max_depth.is_some_and(|d| depth >= d);
        if pure || sample.len() < 2 || depth_reached {
            return id;
        }
        let Some(best) = self.best_split(&sample, counts) else {
            return id;
        };
        self.importance[best.feature] += sample.len() as f64 / self.n_root * best.gain;
        let (left, right): (Vec<usize>, Vec<usize>) = sample
            .into_iter()
            .partition(|&i| value_at(&self.rows[i], best.feature) <= best.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&mut self, sample: &[usize], counts: [usize; 2]) -> Option<Candidate> {
        let n = sample.len();
        let parent = gini(counts);
        for &i in sample {
            self.multiplicity[i] += 1;
        }
        let n_features = self.feature_order.len();
        let mut scored = 0;
        let mut best: Option<Candidate> = None;
        let mut nonzero: Vec<(f64, usize, u32)> = Vec::new();
        for k in 0..n_features {
            if scored >= self.mtry {
                break;
            }
            let swap = k + rng::below(&mut self.rng, n_features - k);
            self.feature_order.swap(k, swap);
            let f = self.feature_order[k];

            nonzero.clear();
            for &(i, v) in &self.columns[f] {
                let m = self.multiplicity[i];
                if m > 0 {
                    nonzero.push((v, self.labels[i].index(), m));
                }
            }
            let nz_total: usize = nonzero.iter().map(|e| e.2 as usize).sum();
            let zeros = n - nz_total;
            let constant = if zeros > 0 {
                nonzero.is_empty()
            } else {
                nonzero.iter().all(|e| e.0 == nonzero[0].0)
            };
            if constant {
                continue;
            }
            scored += 1;
            nonzero.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut nz_counts = [0usize; 2];
            for e in &nonzero {
                nz_counts[e.1] += e.2 as usize;
            }
            let mut left = [counts[0] - nz_counts[0], counts[1] - nz_counts[1]];
            let mut prev = 0.0;
            let mut left_n = zeros;
            let mut consider = |left: [usize; 2], left_n: usize, lo: f64, hi: f64| {
                if left_n == 0 || left_n == n {
                    return;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let wl = left_n as f64 / n as f64;
                let gain = parent - wl * gini(left) - (1.0 - wl) * gini(right);
                let better = match &best {
                    None => gain > GAIN_EPS,
                    Some(b) => {
                        gain > b.gain + GAIN_EPS
                            || ((gain - b.gain).abs() <= GAIN_EPS && f < b.feature)
                    }
                };
                if better {
                    best = Some(Candidate {
                        gain,
                        feature: f,
                        threshold: lo + (hi - lo) / 2.0,
                    });
                }
            };
            for (pos, &(v, c, m)) in nonzero.iter().enumerate() {
                if (pos > 0 || zeros > 0) && v > prev {
                    consider(left, left_n, prev, v);
                }
                left[c] += m as usize;
                left_n += m as usize;
                prev = v;
            }
        }
        for &i in sample {
            self.multiplicity[i] = 0;
        }
        best
    }
}
