//! Gaussian naive Bayes.

use serde::{Deserialize, Serialize};

use super::{softmax_in_place, ClassifierError, TrainSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnbParams {
    /// Added to every variance, as a fraction of the largest feature variance.
    pub var_smoothing: f64,
    /// Class priors in class order; empirical frequencies when absent.
    pub priors: Option<Vec<f64>>,
}

impl Default for GnbParams {
    fn default() -> Self {
        Self {
            var_smoothing: 1e-9,
            priors: None,
        }
    }
}

impl GnbParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.var_smoothing > 0.0 && self.var_smoothing.is_finite()) {
            return Err(ClassifierError::InvalidSpec(
                "var_smoothing must be > 0".into(),
            ));
        }
        if let Some(p) = &self.priors {
            let s: f64 = p.iter().sum();
            if p.iter().any(|&v| v.is_nan() || v <= 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(ClassifierError::InvalidSpec(
                    "priors must be positive and sum to 1".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub hyperparameters: GnbParams,
    /// C × d
    pub means: Vec<Vec<f64>>,
    /// C × d, smoothed
    pub variances: Vec<Vec<f64>>,
    pub log_priors: Vec<f64>,
    pub epsilon: f64,
}

impl GaussianNb {
    pub(crate) fn train(data: &TrainSet, params: &GnbParams) -> Result<Self, ClassifierError> {
        let (c, d) = (data.n_classes, data.d);
        if let Some(p) = &params.priors {
            if p.len() != c {
                return Err(ClassifierError::InvalidSpec(format!(
                    "{} priors for {c} classes",
                    p.len()
                )));
            }
        }
        let mut counts = vec![0usize; c];
        let mut means = vec![vec![0.0; d]; c];
        for i in 0..data.n {
            let k = data.y[i];
            counts[k] += 1;
            means[k]
                .iter_mut()
                .zip(data.x(i))
                .for_each(|(m, &v)| *m += v);
        }
        for (m, &n) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= n as f64);
        }
        let mut variances = vec![vec![0.0; d]; c];
        for i in 0..data.n {
            let k = data.y[i];
            for ((s, &v), &m) in variances[k].iter_mut().zip(data.x(i)).zip(&means[k]) {
                *s += (v - m) * (v - m);
            }
        }
        for (var, &n) in variances.iter_mut().zip(&counts) {
            var.iter_mut().for_each(|v| *v /= n as f64);
        }

        let max_var = (0..d)
            .map(|j| {
                let mean = (0..data.n).map(|i| data.x(i)[j]).sum::<f64>() / data.n as f64;
                (0..data.n)
                    .map(|i| (data.x(i)[j] - mean).powi(2))
                    .sum::<f64>()
                    / data.n as f64
            })
            .fold(0.0, f64::max);
        // all-constant features still need a strictly positive variance
        let epsilon = if max_var > 0.0 {
            params.var_smoothing * max_var
        } else {
            params.var_smoothing
        };
        variances.iter_mut().flatten().for_each(|v| *v += epsilon);

        let log_priors = match &params.priors {
            Some(p) => p.iter().map(|v| v.ln()).collect(),
            None => counts
                .iter()
                .map(|&n| (n as f64 / data.n as f64).ln())
                .collect(),
        };
        Ok(Self {
            hyperparameters: params.clone(),
            means,
            variances,
            log_priors,
            epsilon,
        })
    }

    /// ln P(c) + Σ_j ln N(x_j; μ_cj, σ²_cj) per class.
    pub fn joint_log_likelihood(&self, x: &[f64]) -> Vec<f64> {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.log_priors
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(&lp, (mu, var))| {
                lp + x
                    .iter()
                    .zip(mu.iter().zip(var))
                    .map(|(&v, (&m, &s2))| -0.5 * (ln_2pi + s2.ln()) - (v - m).powi(2) / (2.0 * s2))
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn proba(&self, x: &[f64]) -> Vec<f64> {
        let mut p = self.joint_log_likelihood(x);
        softmax_in_place(&mut p);
        p
    }

    pub(crate) fn check(&self, d: usize, c: usize) -> bool {
        self.means.len() == c
            && self.variances.len() == c
            && self.log_priors.len() == c
            && self
                .means
                .iter()
                .chain(&self.variances)
                .all(|r| r.len() == d)
            && self.variances.iter().flatten().all(|&v| v > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> TrainSet {
        TrainSet {
            x: vec![-2.0, -1.0, 1.0, 2.0],
            y: vec![0, 0, 1, 1],
            n: 4,
            d: 1,
            n_classes: 2,
        }
    }

    #[test]
    fn symmetric_toy_boundary_at_zero() {
        let m = GaussianNb::train(&toy(), &GnbParams::default()).unwrap();
        assert_eq!(m.means, vec![vec![-1.5], vec![1.5]]);
        let p0 = m.proba(&[0.0]);
        assert!((p0[0] - 0.5).abs() < 1e-12);
        assert!(m.proba(&[-1e-3])[0] > 0.5);
        assert!(m.proba(&[1e-3])[1] > 0.5);
    }

    #[test]
    fn variance_floor() {
        let m = GaussianNb::train(&toy(), &GnbParams::default()).unwrap();
        // overall variance of {-2,-1,1,2} is 2.5
        assert!((m.epsilon - 2.5e-9).abs() < 1e-20);
        assert!(m.variances.iter().flatten().all(|&v| v >= m.epsilon));
    }

    #[test]
    fn constant_feature_has_positive_variance() {
        let data = TrainSet {
            x: vec![3.0; 4],
            y: vec![0, 0, 1, 1],
            n: 4,
            d: 1,
            n_classes: 2,
        };
        let m = GaussianNb::train(&data, &GnbParams::default()).unwrap();
        assert!(m.variances.iter().flatten().all(|&v| v > 0.0));
        assert!(m.proba(&[3.0]).iter().all(|p| p.is_finite()));
    }

    #[test]
    fn explicit_priors_shift_boundary() {
        let p = GnbParams {
            priors: Some(vec![0.9, 0.1]),
            ..GnbParams::default()
        };
        let m = GaussianNb::train(&toy(), &p).unwrap();
        assert!(m.proba(&[0.0])[0] > 0.5);
        let bad = GnbParams {
            priors: Some(vec![0.5, 0.6]),
            ..GnbParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
