use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, EmbeddedRecord};
use crate::seed::rng_from;
use crate::{Error, Result};

use super::{dot, LinearModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-4,
            epochs: 20,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda <= 0.0 || self.epochs == 0 {
            return Err(Error::invalid("linear_svm: lambda and epochs must be positive"));
        }
        Ok(())
    }
}

fn sign(c: ClassLabel) -> f64 {
    match c {
        ClassLabel::NotQuestion => -1.0,
        ClassLabel::Question => 1.0,
    }
}

/// `lambda / 2 * (|w|^2 + b^2) + mean hinge loss`.
pub fn svm_objective(data: &[EmbeddedRecord], model: &LinearModel, lambda: f64) -> f64 {
    let hinge: f64 = data
        .iter()
        .map(|r| (1.0 - sign(r.class) * model.decision(&r.vector)).max(0.0))
        .sum();
    let reg = model.weights.iter().map(|v| v * v).sum::<f64>() + model.bias * model.bias;
    0.5 * lambda * reg + hinge / data.len() as f64
}

#[derive(Debug, Clone)]
pub struct SvmFit {
    pub model: LinearModel,
    /// Objective after each epoch.
    pub objectives: Vec<f64>,
}

/// Pegasos: per-example subgradient steps of size `1 / (lambda * t)` with the
/// bias treated as a weight on a constant feature, followed by projection onto
/// the ball of radius `1 / sqrt(lambda)`. The example order is reshuffled each
/// epoch from `seed`. The returned model is the average of all iterates.
pub fn svm_train(data: &[EmbeddedRecord], params: &SvmParams, seed: u64) -> SvmFit {
    let dim = data[0].vector.len();
    let lambda = params.lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut rng = rng_from(seed);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; dim];
    let mut avg_b = 0.0;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut objectives = Vec::with_capacity(params.epochs);
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let r = &data[i];
            let y = sign(r.class);
            let eta = 1.0 / (lambda * t as f64);
            let margin = y * (dot(&w, &r.vector) + b);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            b *= shrink;
            if margin < 1.0 {
                for (wi, &x) in w.iter_mut().zip(&r.vector) {
                    *wi += eta * y * f64::from(x);
                }
                b += eta * y;
            }
            let norm = (w.iter().map(|v| v * v).sum::<f64>() + b * b).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
                b *= s;
            }
            let k = 1.0 / t as f64;
            for (a, wi) in avg_w.iter_mut().zip(&w) {
                *a += (wi - *a) * k;
            }
            avg_b += (b - avg_b) * k;
        }
        let snapshot = LinearModel {
            weights: avg_w.clone(),
            bias: avg_b,
        };
        objectives.push(svm_objective(data, &snapshot, lambda));
    }
    SvmFit {
        model: LinearModel {
            weights: avg_w,
            bias: avg_b,
        },
        objectives,
    }
}
