use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, EmbeddedRecord};
use crate::{Error, Result};

use super::Prediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 1 }
    }
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("knn: k must be positive"));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// Majority vote among the `k` nearest training records (Euclidean distance).
///
/// Equal distances are ordered by position in `train`. A tied vote goes to the
/// class with the smaller mean distance among its voters, then to `NotQuestion`.
/// The score is the vote fraction of the predicted class.
pub fn knn_predict(train: &[EmbeddedRecord], query: &[f32], k: usize) -> Result<Prediction> {
    if train.is_empty() {
        return Err(Error::invalid("knn: empty training set"));
    }
    if k == 0 || k > train.len() {
        return Err(Error::invalid(format!("knn: k = {k} outside 1..={}", train.len())));
    }
    let mut dists: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, r)| (sq_dist(&r.vector, query), i))
        .collect();
    if k < dists.len() {
        dists.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let mut votes = [0usize; 2];
    let mut dist_sum = [0f64; 2];
    for &(d, i) in &dists[..k] {
        let c = train[i].class.index();
        votes[c] += 1;
        dist_sum[c] += d.sqrt();
    }
    let class = if votes[1] > votes[0] {
        ClassLabel::Question
    } else if votes[1] < votes[0] {
        ClassLabel::NotQuestion
    } else if dist_sum[1] / (votes[1] as f64) < dist_sum[0] / (votes[0] as f64) {
        ClassLabel::Question
    } else {
        ClassLabel::NotQuestion
    };
    Ok(Prediction {
        class,
        score: votes[class.index()] as f64 / k as f64,
    })
}
