//! One-vs-rest linear SVM trained with Pegasos-style hinge-loss subgradient
//! steps (step 1/(λt), projection onto the ‖w‖ ≤ 1/√λ ball). The bias is a
//! constant input feature and is penalized with the weights.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{softmax_in_place, ClassifierError, Standardizer, TrainSet};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub l2: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            epochs: 200,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.l2 > 0.0 && self.l2.is_finite() && self.epochs > 0) {
            return Err(ClassifierError::InvalidSpec(
                "svm needs l2 > 0 and epochs > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub hyperparameters: SvmParams,
    pub scaler: Standardizer,
    /// One hyperplane per class: d weights followed by the bias.
    pub hyperplanes: Vec<Vec<f64>>,
}

fn dot_aug(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

/// Trains one binary problem (`positive` vs rest) on standardized rows.
fn pegasos(
    x: &[f64],
    y: &[usize],
    d: usize,
    positive: usize,
    p: &SvmParams,
    stream: u64,
) -> Vec<f64> {
    let n = y.len();
    let mut rng = seed::rng_for(stream, &[positive as u64]);
    let mut w = vec![0.0; d + 1];
    let radius = 1.0 / p.l2.sqrt();
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0u64;
    for _ in 0..p.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (p.l2 * t as f64);
            let xi = &x[i * d..(i + 1) * d];
            let label = if y[i] == positive { 1.0 } else { -1.0 };
            let margin = label * dot_aug(&w, xi);
            let shrink = 1.0 - eta * p.l2;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (v, &xv) in w[..d].iter_mut().zip(xi) {
                    *v += eta * label * xv;
                }
                w[d] += eta * label;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    w
}

impl LinearSvm {
    pub(crate) fn train(data: &TrainSet, p: &SvmParams, root_seed: u64) -> Self {
        let scaler = Standardizer::fit(data);
        let x = scaler.transform_all(&data.x, data.d);
        let stream = seed::derive(root_seed, &[0x0073_766d]);
        let hyperplanes = (0..data.n_classes)
            .into_par_iter()
            .map(|k| pegasos(&x, &data.y, data.d, k, p, stream))
            .collect();
        Self {
            hyperparameters: p.clone(),
            scaler,
            hyperplanes,
        }
    }

    pub fn margins(&self, x: &[f64]) -> Vec<f64> {
        let xs = self.scaler.transform(x);
        self.hyperplanes.iter().map(|w| dot_aug(w, &xs)).collect()
    }

    /// Softmax over the one-vs-rest margins (uncalibrated).
    pub fn proba(&self, x: &[f64]) -> Vec<f64> {
        let mut m = self.margins(x);
        softmax_in_place(&mut m);
        m
    }

    pub(crate) fn check(&self, d: usize, c: usize) -> bool {
        self.hyperplanes.len() == c
            && self.hyperplanes.iter().all(|w| w.len() == d + 1)
            && self.scaler.check(d)
    }
}
