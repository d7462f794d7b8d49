//! Multinomial logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{softmax_in_place, ClassifierError, FitWarning, Standardizer, TrainSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    /// L2 penalty on the weights (bias is not penalized).
    pub l2: f64,
    pub learning_rate: f64,
    pub max_iter: usize,
    /// Stop once an accepted step lowers the loss by less than this.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            learning_rate: 0.1,
            max_iter: 2000,
            tol: 1e-6,
        }
    }
}

impl LogisticParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.l2 >= 0.0 && self.learning_rate > 0.0 && self.tol >= 0.0 && self.max_iter > 0) {
            return Err(ClassifierError::InvalidSpec(
                "lr needs l2 ≥ 0, learning_rate > 0, tol ≥ 0, max_iter > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Softmax cross-entropy with L2 on `params = [W (C×d, row-major), b (C)]`.
/// Returns the mean loss and its gradient in the same layout.
pub fn loss_and_grad(
    params: &[f64],
    x: &[f64],
    y: &[usize],
    n_classes: usize,
    l2: f64,
) -> (f64, Vec<f64>) {
    let n = y.len();
    let c = n_classes;
    let d = x.len() / n.max(1);
    debug_assert_eq!(params.len(), c * d + c);
    let (w, b) = params.split_at(c * d);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut z = vec![0.0; c];
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        for k in 0..c {
            z[k] = b[k]
                + w[k * d..(k + 1) * d]
                    .iter()
                    .zip(xi)
                    .map(|(a, v)| a * v)
                    .sum::<f64>();
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[y[i]];
        for k in 0..c {
            let r = (z[k] - lse).exp() - if k == y[i] { 1.0 } else { 0.0 };
            for (g, v) in grad[k * d..(k + 1) * d].iter_mut().zip(xi) {
                *g += r * v;
            }
            grad[c * d + k] += r;
        }
    }
    let nf = n.max(1) as f64;
    loss /= nf;
    grad.iter_mut().for_each(|g| *g /= nf);
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, v) in grad[..c * d].iter_mut().zip(w) {
        *g += l2 * v;
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub hyperparameters: LogisticParams,
    pub scaler: Standardizer,
    pub n_classes: usize,
    /// C × d, row-major, over standardized features.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub iterations: usize,
}

impl LogisticModel {
    pub(crate) fn train(data: &TrainSet, p: &LogisticParams) -> (Self, Option<FitWarning>) {
        let scaler = Standardizer::fit(data);
        let x = scaler.transform_all(&data.x, data.d);
        let (c, d) = (data.n_classes, data.d);
        let mut params = vec![0.0; c * d + c];
        let mut lr = p.learning_rate;
        let (mut loss, mut grad) = loss_and_grad(&params, &x, &data.y, c, p.l2);
        let mut converged = false;
        let mut iterations = 0;
        while iterations < p.max_iter {
            iterations += 1;
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(w, g)| w - lr * g).collect();
            let (trial_loss, trial_grad) = loss_and_grad(&trial, &x, &data.y, c, p.l2);
            if trial_loss > loss {
                lr /= 2.0;
                if lr < 1e-12 {
                    converged = true;
                    break;
                }
                continue;
            }
            let delta = loss - trial_loss;
            params = trial;
            loss = trial_loss;
            grad = trial_grad;
            if delta < p.tol {
                converged = true;
                break;
            }
        }
        let bias = params.split_off(c * d);
        let model = Self {
            hyperparameters: p.clone(),
            scaler,
            n_classes: c,
            weights: params,
            bias,
            iterations,
        };
        let warning = (!converged).then(|| FitWarning::Convergence {
            family: "lr".into(),
            iterations,
        });
        (model, warning)
    }

    pub fn proba(&self, x: &[f64]) -> Vec<f64> {
        let xs = self.scaler.transform(x);
        let d = xs.len();
        let mut z: Vec<f64> = (0..self.n_classes)
            .map(|k| {
                self.bias[k]
                    + self.weights[k * d..(k + 1) * d]
                        .iter()
                        .zip(&xs)
                        .map(|(a, v)| a * v)
                        .sum::<f64>()
            })
            .collect();
        softmax_in_place(&mut z);
        z
    }

    pub(crate) fn check(&self, d: usize, c: usize) -> bool {
        self.n_classes == c
            && self.weights.len() == c * d
            && self.bias.len() == c
            && self.scaler.check(d)
    }
}
