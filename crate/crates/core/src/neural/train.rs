use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{grad_blocks, DenseNet, Loss, Mode};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Standard deviation of Gaussian noise added to autoencoder inputs.
    pub noise_std: f64,
    /// Autoencoder: per-variable block dropout on inputs. Classifier: hidden-unit dropout.
    pub dropout: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_norm: bool,
    /// Linear activations everywhere (and no batch norm).
    pub linear_only: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 1000,
            noise_std: 0.05,
            dropout: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_norm: true,
            linear_only: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad(format!("noise std {} must be non-negative", self.noise_std));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1]", self.dropout));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("invalid moment decay or epsilon".into());
        }
        Ok(())
    }
}

/// Adaptive moment estimation over a network's parameter blocks.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &mut DenseNet, hp: &Hyperparams) -> Self {
        let shapes: Vec<usize> = net.param_blocks_mut().iter().map(|b| b.len()).collect();
        Adam {
            lr: hp.learning_rate,
            beta1: hp.beta1,
            beta2: hp.beta2,
            eps: hp.epsilon,
            step: 0,
            m: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            v: shapes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    pub(crate) fn update(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (b, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[b], &mut self.v[b]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Mini-batch training loop shared by the autoencoder and the classifier.
///
/// `augment` perturbs each batch input in place before the forward pass.
/// Returns the mean batch loss of every epoch. With batch norm present a
/// trailing batch of one sample is skipped.
pub(crate) fn fit(
    net: &mut DenseNet,
    inputs: &Matrix,
    targets: &Matrix,
    loss: Loss,
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
    augment: &mut dyn FnMut(&mut Matrix, &mut ChaCha8Rng),
) -> Result<Vec<f64>> {
    hp.validate()?;
    let n = inputs.rows();
    if n == 0 || targets.rows() != n {
        return Err(Error::DimensionMismatch(format!("{n} inputs and {} targets", targets.rows())));
    }
    let skip_single = net.has_batch_norm();
    let mut adam = Adam::new(net, hp);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        order.shuffle(rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(hp.batch_size) {
            if skip_single && chunk.len() == 1 && n > 1 {
                continue;
            }
            let mut x = inputs.select_rows(chunk);
            let t = targets.select_rows(chunk);
            augment(&mut x, rng);
            let caches = net.forward(&x, Mode::Train, Some(rng));
            let (value, d_out) = loss.with_gradient(&caches.last().expect("layers").output, &t);
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    learning_rate: hp.learning_rate,
                });
            }
            let grads = net.backward(&caches, &d_out, Mode::Train);
            adam.update(net.param_blocks_mut(), grad_blocks(&grads));
            total += value;
            batches += 1;
        }
        history.push(total / batches.max(1) as f64);
    }
    if !net.is_finite() {
        return Err(Error::Diverged {
            epoch: hp.epochs.saturating_sub(1),
            learning_rate: hp.learning_rate,
        });
    }
    net.quantize();
    Ok(history)
}
