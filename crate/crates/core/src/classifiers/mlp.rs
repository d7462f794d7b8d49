//! Feed-forward network: ReLU hidden layers, softmax output, cross-entropy
//! loss, mini-batch gradient descent with momentum and validation-based early
//! stopping.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{softmax_in_place, ClassifierError, FitWarning, Standardizer, TrainSet};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of training rows held out for early stopping; 0 disables it.
    pub validation_fraction: f64,
    pub patience: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 200,
            validation_fraction: 0.1,
            patience: 20,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.batch_size > 0
            && self.epochs > 0
            && (0.0..0.5).contains(&self.validation_fraction)
            && self.hidden.iter().all(|&h| h > 0);
        if !ok {
            return Err(ClassifierError::InvalidSpec(
                "dnn needs learning_rate > 0, momentum in [0,1), batch_size/epochs > 0, \
                 validation_fraction in [0,0.5), non-empty hidden layers"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// n_out × n_in, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            n_in: self.n_in,
            n_out: self.n_out,
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn apply(&self, a: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                self.bias[o]
                    + self.weights[o * self.n_in..(o + 1) * self.n_in]
                        .iter()
                        .zip(a)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }
}

/// He-style uniform init: U(±√(6/fan_in)), zero biases.
pub fn init_layers<R: Rng>(sizes: &[usize], rng: &mut R) -> Vec<Layer> {
    sizes
        .windows(2)
        .map(|w| {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / n_in.max(1) as f64).sqrt();
            Layer {
                n_in,
                n_out,
                weights: (0..n_in * n_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect(),
                bias: vec![0.0; n_out],
            }
        })
        .collect()
}

/// Activations of every layer, input first; the last entry is the softmax.
fn forward(layers: &[Layer], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.to_vec());
    for (l, layer) in layers.iter().enumerate() {
        let mut z = layer.apply(acts.last().unwrap());
        if l + 1 == layers.len() {
            softmax_in_place(&mut z);
        } else {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        acts.push(z);
    }
    acts
}

/// Mean cross-entropy over `rows` of `x` and its gradient per layer.
pub fn loss_and_grad(
    layers: &[Layer],
    x: &[f64],
    d: usize,
    y: &[usize],
    rows: &[usize],
) -> (f64, Vec<Layer>) {
    let mut grads: Vec<Layer> = layers.iter().map(Layer::zeros_like).collect();
    let mut loss = 0.0;
    for &i in rows {
        let acts = forward(layers, &x[i * d..(i + 1) * d]);
        let out = acts.last().unwrap();
        loss -= out[y[i]].max(f64::MIN_POSITIVE).ln();
        let mut delta: Vec<f64> = out.clone();
        delta[y[i]] -= 1.0;
        for l in (0..layers.len()).rev() {
            let a_prev = &acts[l];
            let g = &mut grads[l];
            let rows = g.weights.chunks_mut(layers[l].n_in);
            for ((b, row), &d_o) in g.bias.iter_mut().zip(rows).zip(&delta) {
                *b += d_o;
                row.iter_mut().zip(a_prev).for_each(|(w, a)| *w += d_o * a);
            }
            if l > 0 {
                let layer = &layers[l];
                delta = (0..layer.n_in)
                    .map(|j| {
                        if a_prev[j] <= 0.0 {
                            return 0.0;
                        }
                        (0..layer.n_out)
                            .map(|o| layer.weights[o * layer.n_in + j] * delta[o])
                            .sum()
                    })
                    .collect();
            }
        }
    }
    let n = rows.len().max(1) as f64;
    for g in &mut grads {
        g.weights
            .iter_mut()
            .chain(g.bias.iter_mut())
            .for_each(|v| *v /= n);
    }
    (loss / n, grads)
}

pub fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
        .collect()
}

/// Writes `params` back into `layers` (same layout as [`flatten`]).
pub fn unflatten_into(layers: &mut [Layer], params: &[f64]) {
    let mut it = params.iter();
    for l in layers {
        l.weights
            .iter_mut()
            .chain(l.bias.iter_mut())
            .for_each(|v| *v = *it.next().unwrap());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub hyperparameters: MlpParams,
    pub scaler: Standardizer,
    pub layers: Vec<Layer>,
    pub epochs_run: usize,
}

impl Mlp {
    pub(crate) fn train(
        data: &TrainSet,
        p: &MlpParams,
        root_seed: u64,
    ) -> (Self, Option<FitWarning>) {
        let scaler = Standardizer::fit(data);
        let x = scaler.transform_all(&data.x, data.d);
        let mut rng = seed::rng_for(root_seed, &[0x0064_6e6e]);

        let mut sizes = vec![data.d];
        sizes.extend(&p.hidden);
        sizes.push(data.n_classes);
        let mut layers = init_layers(&sizes, &mut rng);
        let mut velocity: Vec<Layer> = layers.iter().map(Layer::zeros_like).collect();

        let mut order: Vec<usize> = (0..data.n).collect();
        order.shuffle(&mut rng);
        let n_val = (data.n as f64 * p.validation_fraction).floor() as usize;
        let early_stopping = n_val > 0 && p.patience > 0 && n_val < data.n;
        let (val, mut train): (Vec<usize>, Vec<usize>) = if early_stopping {
            (order[..n_val].to_vec(), order[n_val..].to_vec())
        } else {
            (vec![], order)
        };

        let mut best = (f64::INFINITY, layers.clone());
        let mut stale = 0;
        let mut stopped_early = false;
        let mut epochs_run = 0;
        for _ in 0..p.epochs {
            epochs_run += 1;
            train.shuffle(&mut rng);
            for batch in train.chunks(p.batch_size) {
                let (_, grads) = loss_and_grad(&layers, &x, data.d, &data.y, batch);
                for ((layer, vel), g) in layers.iter_mut().zip(&mut velocity).zip(&grads) {
                    let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
                    let vels = vel.weights.iter_mut().chain(vel.bias.iter_mut());
                    let gs = g.weights.iter().chain(&g.bias);
                    for ((w, v), g) in params.zip(vels).zip(gs) {
                        *v = p.momentum * *v - p.learning_rate * g;
                        *w += *v;
                    }
                }
            }
            if early_stopping {
                let (val_loss, _) = loss_and_grad(&layers, &x, data.d, &data.y, &val);
                if val_loss < best.0 {
                    best = (val_loss, layers.clone());
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= p.patience {
                        stopped_early = true;
                        break;
                    }
                }
            }
        }
        if early_stopping {
            layers = best.1;
        }
        let warning = (!stopped_early).then(|| FitWarning::Convergence {
            family: "dnn".into(),
            iterations: epochs_run,
        });
        (
            Self {
                hyperparameters: p.clone(),
                scaler,
                layers,
                epochs_run,
            },
            warning,
        )
    }

    pub fn proba(&self, x: &[f64]) -> Vec<f64> {
        let xs = self.scaler.transform(x);
        forward(&self.layers, &xs).pop().unwrap()
    }

    pub(crate) fn check(&self, d: usize, c: usize) -> bool {
        let mut n_in = d;
        for l in &self.layers {
            if l.n_in != n_in || l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return false;
            }
            n_in = l.n_out;
        }
        !self.layers.is_empty() && n_in == c && self.scaler.check(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layers = init_layers(&[3, 4, 2], &mut rng);
        let flat = flatten(&layers);
        assert_eq!(flat.len(), 3 * 4 + 4 + 4 * 2 + 2);
        let mut copy: Vec<Layer> = layers.iter().map(Layer::zeros_like).collect();
        unflatten_into(&mut copy, &flat);
        assert_eq!(copy, layers);
    }

    #[test]
    fn init_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layers = init_layers(&[24, 8], &mut rng);
        let limit = (6.0f64 / 24.0).sqrt();
        assert!(layers[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(layers[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn no_hidden_layers_is_softmax_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layers = init_layers(&[4, 3], &mut rng);
        let p = forward(&layers, &[0.3, -1.0, 2.0, 0.5]).pop().unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn learns_xor() {
        let pts = [(0.0, 0.0, 0), (0.0, 1.0, 1), (1.0, 0.0, 1), (1.0, 1.0, 0)];
        let mut x = vec![];
        let mut y = vec![];
        for _ in 0..10 {
            for p in pts {
                x.extend([p.0, p.1]);
                y.push(p.2);
            }
        }
        let data = TrainSet {
            x,
            y,
            n: 40,
            d: 2,
            n_classes: 2,
        };
        let p = MlpParams {
            hidden: vec![8],
            learning_rate: 0.05,
            epochs: 400,
            validation_fraction: 0.0,
            ..MlpParams::default()
        };
        let (m, warn) = Mlp::train(&data, &p, 5);
        assert!(warn.is_some());
        for q in pts {
            let pr = m.proba(&[q.0, q.1]);
            assert_eq!(usize::from(pr[1] > pr[0]), q.2, "{q:?} -> {pr:?}");
        }
    }
}
