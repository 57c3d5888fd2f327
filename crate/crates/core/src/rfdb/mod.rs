//! Random-forest decision block: bagged CART trees over the class-percentage
//! features, predicting the route by majority vote.

mod tree;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labeler::RfdbRow;
use crate::types::{FeatureVector, RouteLabel};

pub use tree::{gini, Histogram, Node, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples: usize,
    pub features_per_split: usize,
    pub seed: u64,
    /// When false every tree sees the full dataset (test hook).
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            min_samples: 2,
            features_per_split: 2,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParam("n_trees must be at least 1".into()));
        }
        if self.min_samples < 2 {
            return Err(Error::InvalidParam("min_samples must be at least 2".into()));
        }
        if !(1..=FeatureVector::LEN).contains(&self.features_per_split) {
            return Err(Error::InvalidParam(format!(
                "features_per_split must be in 1..=4, got {}",
                self.features_per_split
            )));
        }
        Ok(())
    }

    /// Seed of tree `k`; drives both its bootstrap draw and its feature draws.
    pub fn tree_seed(&self, k: usize) -> u64 {
        self.seed.wrapping_add(k as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    /// SHA-256 over the training rows in order.
    pub dataset_fingerprint: String,
    pub n_rows: usize,
    pub tree_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionForest {
    pub params: ForestParams,
    pub metadata: TrainingMetadata,
    pub trees: Vec<Tree>,
}

/// Internal row form: raw features plus the label's tie-order index.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TrainRow {
    pub features: [f64; 4],
    pub label: usize,
}

impl From<&RfdbRow> for TrainRow {
    fn from(r: &RfdbRow) -> Self {
        TrainRow {
            features: r.features.0,
            label: r.label.index(),
        }
    }
}

/// `rows.len()` uniform draws with replacement.
pub fn bootstrap_sample(rows: &[RfdbRow], seed: u64) -> Result<Vec<RfdbRow>> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = tree::seeded(seed, 0);
    Ok((0..rows.len())
        .map(|_| rows[rng.random_range(0..rows.len())].clone())
        .collect())
}

/// Grows a single CART tree on `rows` with feature draws seeded by `seed`.
pub fn build_tree(rows: &[RfdbRow], params: &ForestParams, seed: u64) -> Result<Tree> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.validate()?;
    let train: Vec<TrainRow> = rows.iter().map(TrainRow::from).collect();
    Ok(tree::grow(&train, params, &mut tree::seeded(seed, 1)))
}

pub fn dataset_fingerprint(rows: &[RfdbRow]) -> String {
    let mut h = Sha256::new();
    for r in rows {
        for v in r.features.0 {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update([r.label.index() as u8]);
        h.update((r.source_image.len() as u64).to_le_bytes());
        h.update(r.source_image.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn forest_train(dataset: &[RfdbRow], params: &ForestParams) -> Result<DecisionForest> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.validate()?;
    let tree_seeds: Vec<u64> = (0..params.n_trees).map(|k| params.tree_seed(k)).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&seed| {
            if params.bootstrap {
                build_tree(&bootstrap_sample(dataset, seed)?, params, seed)
            } else {
                build_tree(dataset, params, seed)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecisionForest {
        params: *params,
        metadata: TrainingMetadata {
            dataset_fingerprint: dataset_fingerprint(dataset),
            n_rows: dataset.len(),
            tree_seeds,
        },
        trees,
    })
}

/// Seeded holdout split: `round(fraction * n)` rows go to validation, the
/// rest to training. Both halves keep the input order.
pub fn holdout_split(
    rows: &[RfdbRow],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<RfdbRow>, Vec<RfdbRow>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParam(format!(
            "validation fraction must be in [0, 1), got {fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut tree::seeded(seed, 2));
    let n_val = (fraction * rows.len() as f64).round() as usize;
    let mut is_val = vec![false; rows.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = rows
        .iter()
        .cloned()
        .enumerate()
        .partition(|(i, _)| is_val[*i]);
    Ok((
        train.into_iter().map(|(_, r)| r).collect(),
        val.into_iter().map(|(_, r)| r).collect(),
    ))
}

/// Accuracy on `eval` of always predicting the most common label of `train`.
pub fn majority_baseline(train: &[RfdbRow], eval: &[RfdbRow]) -> f64 {
    if eval.is_empty() {
        return 0.0;
    }
    let mut hist = [0u64; 3];
    for r in train {
        hist[r.label.index()] += 1;
    }
    let label = tree::majority(&hist);
    eval.iter().filter(|r| r.label == label).count() as f64 / eval.len() as f64
}

/// Vote counts in [`RouteLabel::TIE_ORDER`] order.
pub type Votes = [u32; 3];

pub fn forest_predict(forest: &DecisionForest, features: &FeatureVector) -> (RouteLabel, Votes) {
    let mut votes = [0u32; 3];
    for t in &forest.trees {
        votes[t.predict(features).index()] += 1;
    }
    let mut best = 0;
    for i in 1..3 {
        if votes[i] > votes[best] {
            best = i;
        }
    }
    (RouteLabel::from_index(best), votes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub fi: [f64; 4],
    /// Set when no tree has a single split; `fi` is then all zeros.
    pub no_splits: bool,
}

/// Mean decrease in impurity per feature, averaged over trees and normalized
/// to sum to one.
pub fn feature_importance(forest: &DecisionForest) -> FeatureImportance {
    let mut total = [0.0f64; 4];
    for t in &forest.trees {
        let root_n = t.nodes[0].histogram().iter().sum::<u64>() as f64;
        let weighted = |n: &Node| {
            let h = n.histogram();
            let w = h.iter().sum::<u64>() as f64 / root_n;
            w * gini(h).expect("trained nodes are non-empty")
        };
        let mut per_tree = [0.0f64; 4];
        for n in &t.nodes {
            if let Node::Split {
                feature,
                left,
                right,
                ..
            } = n
            {
                per_tree[*feature] +=
                    weighted(n) - weighted(&t.nodes[*left]) - weighted(&t.nodes[*right]);
            }
        }
        for (acc, v) in total.iter_mut().zip(per_tree) {
            *acc += v / forest.trees.len() as f64;
        }
    }
    let sum: f64 = total.iter().sum();
    if forest.trees.iter().all(|t| t.n_splits() == 0) || sum <= 0.0 {
        return FeatureImportance {
            fi: [0.0; 4],
            no_splits: true,
        };
    }
    FeatureImportance {
        fi: total.map(|v| v / sum),
        no_splits: false,
    }
}

impl DecisionForest {
    pub fn predict(&self, features: &FeatureVector) -> (RouteLabel, Votes) {
        forest_predict(self, features)
    }

    /// Fraction of rows whose label the forest reproduces.
    pub fn accuracy(&self, rows: &[RfdbRow]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let hits = rows
            .iter()
            .filter(|r| self.predict(&r.features).0 == r.label)
            .count();
        hits as f64 / rows.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let forest: DecisionForest = serde_json::from_str(text)?;
        forest.params.validate()?;
        if forest.trees.len() != forest.params.n_trees {
            return Err(Error::InvalidParam(format!(
                "forest declares {} trees but carries {}",
                forest.params.n_trees,
                forest.trees.len()
            )));
        }
        for t in &forest.trees {
            t.validate()?;
        }
        Ok(forest)
    }
}
