use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, EmbeddedRecord};
use crate::{Error, Result};

use super::{dot, LinearModel, CHUNK};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    /// Ridge penalty on the weights (not the bias).
    pub lambda: f64,
    /// Initial step size; halved whenever a step would raise the loss.
    pub lr: f64,
    pub max_iter: usize,
    /// Stop once an accepted step lowers the loss by less than this.
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            lambda: 1e-8,
            lr: 0.1,
            max_iter: 1000,
            tol: 1e-7,
        }
    }
}

impl LogRegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lr > 0.0 && self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::invalid("logreg: lambda, lr, max_iter and tol must be positive"));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn target(c: ClassLabel) -> f64 {
    c.index() as f64
}

struct Partial {
    grad: Vec<f64>,
    grad_b: f64,
    loss: f64,
}

/// Sums over fixed-size chunks, combined in chunk order, so results do not
/// depend on the number of threads.
fn accumulate(data: &[EmbeddedRecord], w: &[f64], b: f64, with_grad: bool) -> Partial {
    let parts: Vec<Partial> = data
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut p = Partial {
                grad: if with_grad { vec![0.0; w.len()] } else { Vec::new() },
                grad_b: 0.0,
                loss: 0.0,
            };
            for r in chunk {
                let z = dot(w, &r.vector) + b;
                let y = target(r.class);
                p.loss += softplus(z) - y * z;
                if with_grad {
                    let e = sigmoid(z) - y;
                    for (g, &x) in p.grad.iter_mut().zip(&r.vector) {
                        *g += e * f64::from(x);
                    }
                    p.grad_b += e;
                }
            }
            p
        })
        .collect();
    let mut total = Partial {
        grad: if with_grad { vec![0.0; w.len()] } else { Vec::new() },
        grad_b: 0.0,
        loss: 0.0,
    };
    for p in parts {
        for (t, g) in total.grad.iter_mut().zip(&p.grad) {
            *t += g;
        }
        total.grad_b += p.grad_b;
        total.loss += p.loss;
    }
    total
}

/// Mean negative log-likelihood plus `lambda / 2 * |w|^2`.
pub fn logreg_loss(data: &[EmbeddedRecord], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = data.len() as f64;
    let ridge = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    accumulate(data, w, b, false).loss / n + ridge
}

/// Gradient of [`logreg_loss`] with respect to `(w, b)`.
pub fn logreg_gradient(data: &[EmbeddedRecord], w: &[f64], b: f64, lambda: f64) -> (Vec<f64>, f64) {
    let n = data.len() as f64;
    let p = accumulate(data, w, b, true);
    let grad = p.grad.iter().zip(w).map(|(g, wi)| g / n + lambda * wi).collect();
    (grad, p.grad_b / n)
}

#[derive(Debug, Clone)]
pub struct LogRegFit {
    pub model: LinearModel,
    /// Loss after each accepted step, starting with the loss at zero weights.
    pub losses: Vec<f64>,
}

const MAX_HALVINGS: usize = 60;

/// Full-batch gradient descent from zero weights with step halving.
pub fn logreg_fit(data: &[EmbeddedRecord], params: &LogRegParams) -> LogRegFit {
    let dim = data[0].vector.len();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut lr = params.lr;
    let mut loss = logreg_loss(data, &w, b, params.lambda);
    let mut losses = vec![loss];
    'outer: for _ in 0..params.max_iter {
        let (g, gb) = logreg_gradient(data, &w, b, params.lambda);
        let gnorm = (g.iter().map(|v| v * v).sum::<f64>() + gb * gb).sqrt();
        if gnorm < params.tol {
            break;
        }
        for _ in 0..MAX_HALVINGS {
            let w_new: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - lr * gi).collect();
            let b_new = b - lr * gb;
            let new_loss = logreg_loss(data, &w_new, b_new, params.lambda);
            if new_loss <= loss {
                let improvement = loss - new_loss;
                w = w_new;
                b = b_new;
                loss = new_loss;
                losses.push(loss);
                if improvement < params.tol {
                    break 'outer;
                }
                continue 'outer;
            }
            lr *= 0.5;
        }
        break;
    }
    LogRegFit {
        model: LinearModel { weights: w, bias: b },
        losses,
    }
}
