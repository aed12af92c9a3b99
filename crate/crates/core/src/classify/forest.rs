use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, EmbeddedRecord};
use crate::seed::{derive_indexed, rng_from};
use crate::{Error, Result};

use super::tree::{grow, FeatureChoice, Tree, TreeParams};
use super::Prediction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    /// Features sampled at each split; `None` means `ceil(sqrt(dim))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            features_per_split: None,
            bootstrap: true,
            tree: TreeParams::default(),
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.features_per_split == Some(0) {
            return Err(Error::invalid("random_forest: trees and features_per_split must be positive"));
        }
        self.tree.validate()
    }

    pub fn features_for(&self, dim: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
            .clamp(1, dim.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub tree_seeds: Vec<u64>,
}

/// Each tree draws its bootstrap sample and split features from its own
/// stream seeded by `(seed, tree index)`, so the result does not depend on
/// how trees are scheduled across threads.
pub(crate) fn train(data: &[EmbeddedRecord], params: &ForestParams, seed: u64) -> Forest {
    let dim = data[0].vector.len();
    let per_split = params.features_for(dim);
    let tree_seeds: Vec<u64> = (0..params.trees as u64).map(|t| derive_indexed(seed, t)).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = rng_from(s);
            let n = data.len();
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let choice = if per_split >= dim {
                FeatureChoice::All
            } else {
                FeatureChoice::Random {
                    per_split,
                    rng: &mut rng,
                }
            };
            grow(data, idx, &params.tree, choice)
        })
        .collect();
    Forest { trees, tree_seeds }
}

impl Forest {
    /// Majority vote; a tied vote goes to `NotQuestion`.
    pub fn predict(&self, x: &[f32]) -> Prediction {
        let mut votes = [0usize; 2];
        for t in &self.trees {
            votes[t.predict(x).class.index()] += 1;
        }
        let class = if votes[1] > votes[0] {
            ClassLabel::Question
        } else {
            ClassLabel::NotQuestion
        };
        Prediction {
            class,
            score: votes[class.index()] as f64 / self.trees.len() as f64,
        }
    }
}
