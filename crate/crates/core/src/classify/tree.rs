//! C4.5-style binary decision tree on continuous features.
//!
//! Splits are `x[feature] <= threshold` with thresholds at midpoints between
//! consecutive distinct values. The split with the highest gain ratio wins;
//! ties (within 1e-12) keep the lowest feature index, then the lowest
//! threshold. Pruning is replaced by the `min_leaf` and `min_gain` stopping
//! rules.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, EmbeddedRecord};
use crate::{Error, Result};

use super::Prediction;

/// Two candidate splits whose gain ratios differ by less than this are tied.
pub const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Minimum number of records on each side of a split.
    pub min_leaf: usize,
    /// Minimum information gain (bits) for a split to be considered.
    pub min_gain: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_leaf: 2,
            min_gain: 1e-6,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 || self.min_gain.is_nan() || self.min_gain <= 0.0 {
            return Err(Error::invalid("c45: min_leaf and min_gain must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        /// Child for `x[feature] <= threshold`.
        left: usize,
        right: usize,
    },
    Leaf {
        class: ClassLabel,
        /// Training records reaching this leaf, per class index.
        counts: [u64; 2],
    },
}

/// A tree stored as a flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f32]) -> Prediction {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if f64::from(x[*feature]) <= *threshold { *left } else { *right };
                }
                Node::Leaf { class, counts } => {
                    let total = (counts[0] + counts[1]).max(1);
                    return Prediction {
                        class: *class,
                        score: counts[class.index()] as f64 / total as f64,
                    };
                }
            }
        }
    }

    /// The split at the root, if the root is not a leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    /// Check that every child index and feature index is in range.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::data("tree has no nodes"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature, left, right, ..
            } = n
            {
                if *feature >= dim || *left <= i || *right <= i || *left >= self.nodes.len() || *right >= self.nodes.len() {
                    return Err(Error::data(format!("tree node {i} references an invalid feature or child")));
                }
            }
        }
        Ok(())
    }
}

fn entropy(counts: [u64; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Information gain and gain ratio of splitting `parent` into `left` and the rest.
fn gain_and_ratio(parent: [u64; 2], left: [u64; 2]) -> (f64, f64) {
    let right = [parent[0] - left[0], parent[1] - left[1]];
    let n = (parent[0] + parent[1]) as f64;
    let nl = (left[0] + left[1]) as f64;
    let nr = (right[0] + right[1]) as f64;
    let split_info = entropy([left[0] + left[1], right[0] + right[1]]);
    if split_info == 0.0 {
        return (0.0, 0.0);
    }
    let gain = entropy(parent) - (nl / n) * entropy(left) - (nr / n) * entropy(right);
    (gain, gain / split_info)
}

/// Gain ratio (bits) of the binary split `value <= threshold`.
///
/// Returns 0 when the split leaves one side empty.
pub fn gain_ratio(values: &[f64], labels: &[ClassLabel], threshold: f64) -> f64 {
    let mut parent = [0u64; 2];
    let mut left = [0u64; 2];
    for (v, c) in values.iter().zip(labels) {
        parent[c.index()] += 1;
        if *v <= threshold {
            left[c.index()] += 1;
        }
    }
    gain_and_ratio(parent, left).1
}

/// How split candidates pick their features.
pub(crate) enum FeatureChoice<'r> {
    All,
    Random { per_split: usize, rng: &'r mut ChaCha8Rng },
}

impl FeatureChoice<'_> {
    fn features(&mut self, dim: usize) -> Vec<usize> {
        match self {
            FeatureChoice::All => (0..dim).collect(),
            FeatureChoice::Random { per_split, rng } if *per_split < dim => {
                let mut f = sample(*rng, dim, *per_split).into_vec();
                f.sort_unstable();
                f
            }
            FeatureChoice::Random { .. } => (0..dim).collect(),
        }
    }
}

fn counts_of(data: &[EmbeddedRecord], idx: &[usize]) -> [u64; 2] {
    let mut c = [0u64; 2];
    for &i in idx {
        c[data[i].class.index()] += 1;
    }
    c
}

fn leaf(counts: [u64; 2]) -> Node {
    let class = if counts[1] > counts[0] {
        ClassLabel::Question
    } else {
        ClassLabel::NotQuestion
    };
    Node::Leaf { class, counts }
}

/// Best `(feature, threshold)` for the records in `idx`, or `None` when no
/// candidate satisfies the stopping rules.
pub(crate) fn best_split(
    data: &[EmbeddedRecord],
    idx: &[usize],
    features: &[usize],
    params: &TreeParams,
) -> Option<(usize, f64)> {
    let parent = counts_of(data, idx);
    let mut best: Option<(usize, f64, f64)> = None;
    let mut column: Vec<(f32, ClassLabel)> = Vec::with_capacity(idx.len());
    for &f in features {
        column.clear();
        column.extend(idx.iter().map(|&i| (data[i].vector[f], data[i].class)));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0u64; 2];
        for i in 0..column.len() - 1 {
            left[column[i].1.index()] += 1;
            let (a, b) = (column[i].0, column[i + 1].0);
            if a == b {
                continue;
            }
            let nl = i + 1;
            if nl < params.min_leaf || column.len() - nl < params.min_leaf {
                continue;
            }
            let (gain, ratio) = gain_and_ratio(parent, left);
            if gain < params.min_gain {
                continue;
            }
            if best.is_none_or(|(_, _, r)| ratio > r + TIE_EPSILON) {
                let threshold = (f64::from(a) + f64::from(b)) / 2.0;
                best = Some((f, threshold, ratio));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

/// Grow a tree over the records at `idx` (indices may repeat, as in a bootstrap sample).
pub(crate) fn grow(data: &[EmbeddedRecord], idx: Vec<usize>, params: &TreeParams, mut choice: FeatureChoice<'_>) -> Tree {
    let dim = data[0].vector.len();
    let mut nodes = vec![leaf([0, 0])];
    let mut stack = vec![(0usize, idx)];
    while let Some((at, idx)) = stack.pop() {
        let counts = counts_of(data, &idx);
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || idx.len() < 2 * params.min_leaf {
            nodes[at] = leaf(counts);
            continue;
        }
        let features = choice.features(dim);
        let Some((feature, threshold)) = best_split(data, &idx, &features, params) else {
            nodes[at] = leaf(counts);
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| f64::from(data[i].vector[feature]) <= threshold);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(leaf([0, 0]));
        nodes.push(leaf([0, 0]));
        nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        // Right first so the left subtree is expanded first.
        stack.push((right, r));
        stack.push((left, l));
    }
    Tree { nodes }
}

pub(crate) fn train(data: &[EmbeddedRecord], params: &TreeParams) -> Tree {
    grow(data, (0..data.len()).collect(), params, FeatureChoice::All)
}
