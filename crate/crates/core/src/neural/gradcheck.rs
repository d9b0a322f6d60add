use serde::{Deserialize, Serialize};

use super::net::{DenseNet, LayerCache, Loss, Mode};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Central-difference step on `f64` parameters.
pub const FD_STEP: f64 = 1e-4;

/// Gradients below this magnitude are compared on an absolute scale. Biases
/// feeding batch statistics have exactly zero gradient, and their difference
/// quotients are pure rounding noise of order `eps * loss / FD_STEP`.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, GRAD_FLOOR)` over checked parameters.
    pub max_rel_error: f64,
    pub n_checked: usize,
    /// Parameters whose perturbation moves some relu pre-activation across zero.
    pub n_excluded: usize,
}

#[derive(Debug, Clone, Copy)]
enum Param {
    Weight(usize),
    Bias,
    Gamma,
    Beta,
}

/// Which forward pass a gradient check differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckPass {
    /// Batch norm frozen at its running statistics, no dropout.
    Inference,
    /// Batch norm on the statistics of the batch; dropout masks drawn from the seed are held fixed.
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckPlan {
    pub pass: CheckPass,
    /// Cap on checked weights per layer, drawn without replacement; `None` checks all.
    /// Biases and batch-norm parameters are always checked in full.
    pub weights_per_layer: Option<usize>,
    pub sample_seed: u64,
}

impl CheckPlan {
    pub fn exhaustive(pass: CheckPass) -> Self {
        CheckPlan {
            pass,
            weights_per_layer: None,
            sample_seed: 0,
        }
    }
}

/// Compares backpropagated gradients of `loss(net(x), target)` with central
/// finite differences, batch norm frozen at its running statistics.
pub fn gradient_check(net: &DenseNet, x: &Matrix, target: &Matrix, loss: Loss) -> Result<GradientCheck> {
    gradient_check_plan(net, x, target, loss, &CheckPlan::exhaustive(CheckPass::Inference))
}

/// As [`gradient_check`], but through the training forward pass: batch norm uses
/// the statistics of `x` and dropout masks drawn from `seed` are held fixed.
pub fn gradient_check_train(net: &DenseNet, x: &Matrix, target: &Matrix, loss: Loss, seed: u64) -> Result<GradientCheck> {
    gradient_check_plan(net, x, target, loss, &CheckPlan::exhaustive(CheckPass::Train { dropout_seed: seed }))
}

pub fn gradient_check_plan(net: &DenseNet, x: &Matrix, target: &Matrix, loss: Loss, plan: &CheckPlan) -> Result<GradientCheck> {
    let (mode, mut rng) = match plan.pass {
        CheckPass::Inference => (Mode::Inference, None),
        CheckPass::Train { dropout_seed } => (Mode::Train, Some(ChaCha8Rng::seed_from_u64(dropout_seed))),
    };
    if x.cols() != net.n_in() || target.cols() != net.n_out() || target.rows() != x.rows() || x.rows() == 0 {
        return Err(Error::DimensionMismatch("gradient check batch does not fit the network".into()));
    }
    if mode == Mode::Train && x.rows() < 2 && net.has_batch_norm() {
        return Err(Error::InvalidInput("batch statistics need at least 2 rows".into()));
    }
    // The training forward pass moves running statistics; probe the network as it was.
    let mut scratch = net.clone();
    let caches = scratch.forward(x, mode, rng.as_mut());
    let (_, d_out) = loss.with_gradient(&caches.last().expect("layers").output, target);
    let grads = net.backward(&caches, &d_out, mode);
    let probe = Probe {
        net,
        caches: &caches,
        target,
        loss,
        mode,
    };

    let mut report = GradientCheck {
        max_rel_error: 0.0,
        n_checked: 0,
        n_excluded: 0,
    };
    let mut check = |layer: usize, unit: usize, param: Param, analytic: f64| {
        let plus = probe.loss_with(layer, unit, param, FD_STEP);
        let minus = probe.loss_with(layer, unit, param, -FD_STEP);
        match (plus, minus) {
            (Some(lp), Some(lm)) => {
                let numeric = (lp - lm) / (2.0 * FD_STEP);
                let denom = analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
                report.max_rel_error = report.max_rel_error.max((analytic - numeric).abs() / denom);
                report.n_checked += 1;
            }
            _ => report.n_excluded += 1,
        }
    };
    let mut sampler = ChaCha8Rng::seed_from_u64(plan.sample_seed);
    for (li, (layer, g)) in net.layers.iter().zip(&grads).enumerate() {
        let n_w = layer.weights.len();
        let weights: Vec<usize> = match plan.weights_per_layer {
            Some(k) if k < n_w => {
                let mut idx = rand::seq::index::sample(&mut sampler, n_w, k).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n_w).collect(),
        };
        for w in weights {
            check(li, w / layer.n_in, Param::Weight(w % layer.n_in), g.weights[w]);
        }
        for o in 0..layer.n_out {
            check(li, o, Param::Bias, g.bias[o]);
            if layer.batch_norm.is_some() {
                check(li, o, Param::Gamma, g.gamma[o]);
                check(li, o, Param::Beta, g.beta[o]);
            }
        }
    }
    Ok(report)
}

struct Probe<'a> {
    net: &'a DenseNet,
    caches: &'a [LayerCache],
    target: &'a Matrix,
    loss: Loss,
    mode: Mode,
}

impl Probe<'_> {
    /// Normalization, activation and cached dropout for unit `o` of layer `li`
    /// over the whole batch; `None` if a relu flips against the cached pass.
    fn post_column(&self, li: usize, o: usize, z: &[f64], dgamma: f64, dbeta: f64) -> Option<Vec<f64>> {
        let layer = &self.net.layers[li];
        let cache = &self.caches[li];
        let n = z.len();
        let pre: Vec<f64> = match (&layer.batch_norm, self.mode) {
            (None, _) => z.to_vec(),
            (Some(bn), Mode::Inference) => {
                let (g, b) = (bn.gamma[o] + dgamma, bn.beta[o] + dbeta);
                z.iter()
                    .map(|v| g * (v - bn.running_mean[o]) / (bn.running_var[o] + bn.eps).sqrt() + b)
                    .collect()
            }
            (Some(bn), Mode::Train) => {
                let (g, b) = (bn.gamma[o] + dgamma, bn.beta[o] + dbeta);
                let mean = z.iter().sum::<f64>() / n as f64;
                let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                let is = 1.0 / (var + bn.eps).sqrt();
                z.iter().map(|v| g * (v - mean) * is + b).collect()
            }
        };
        let mut out = Vec::with_capacity(n);
        for (r, p) in pre.into_iter().enumerate() {
            if flips(layer.activation, cache.pre.get(r, o), p) {
                return None;
            }
            let keep = cache.mask.as_ref().map_or(1.0, |m| m[r * layer.n_out + o]);
            out.push(layer.activation.apply(p) * keep);
        }
        Some(out)
    }

    /// Loss with one parameter shifted by `delta`, or `None` if a relu flips.
    ///
    /// A parameter of unit `o` only moves column `o` of its layer's output, so the
    /// next layer's pre-activations get a rank-one update and later layers are
    /// recomputed from there.
    fn loss_with(&self, li: usize, o: usize, param: Param, delta: f64) -> Option<f64> {
        let cache = &self.caches[li];
        let n = cache.z.rows();
        let zcol: Vec<f64> = (0..n)
            .map(|r| {
                cache.z.get(r, o)
                    + match param {
                        Param::Weight(i) => delta * cache.input.get(r, i),
                        Param::Bias => delta,
                        _ => 0.0,
                    }
            })
            .collect();
        let (dg, db) = match param {
            Param::Gamma => (delta, 0.0),
            Param::Beta => (0.0, delta),
            _ => (0.0, 0.0),
        };
        let col = self.post_column(li, o, &zcol, dg, db)?;
        if li + 1 == self.net.layers.len() {
            let mut out = cache.output.clone();
            for (r, c) in col.iter().enumerate() {
                out.set(r, o, *c);
            }
            return Some(self.loss.value(&out, self.target));
        }
        let next = &self.net.layers[li + 1];
        let mut z = self.caches[li + 1].z.clone();
        for (r, c) in col.iter().enumerate() {
            let d = c - cache.output.get(r, o);
            if d == 0.0 {
                continue;
            }
            for (o2, v) in z.row_mut(r).iter_mut().enumerate() {
                *v += d * next.weights[o2 * next.n_in + o];
            }
        }
        let mut k = li + 1;
        loop {
            let n_out = self.net.layers[k].n_out;
            let mut a = Matrix::zeros(n, n_out);
            for o2 in 0..n_out {
                let zc: Vec<f64> = (0..n).map(|r| z.get(r, o2)).collect();
                for (r, v) in self.post_column(k, o2, &zc, 0.0, 0.0)?.into_iter().enumerate() {
                    a.set(r, o2, v);
                }
            }
            k += 1;
            if k == self.net.layers.len() {
                return Some(self.loss.value(&a, self.target));
            }
            z = self.net.layers[k].affine(&a);
        }
    }
}

fn flips(act: super::net::Activation, before: f64, after: f64) -> bool {
    act == super::net::Activation::Relu && ((before > 0.0) != (after > 0.0) || before == 0.0)
}

#[cfg(test)]
mod tests {
    use super::super::net::{Activation, Layer};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_layer_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::new(vec![Layer::init(4, 2, Activation::Linear, false, 0.0, &mut rng)]).unwrap();
        let r = gradient_check(&net, &batch(3, 4, 2), &batch(3, 2, 3), Loss::Mse).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.n_checked, 10);
    }

    #[test]
    fn relu_stack_with_batch_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut layers = vec![
            Layer::init(6, 5, Activation::Relu, true, 0.0, &mut rng),
            Layer::init(5, 4, Activation::Relu, true, 0.0, &mut rng),
            Layer::init(4, 1, Activation::Linear, false, 0.0, &mut rng),
        ];
        // non-trivial running statistics
        for l in layers.iter_mut() {
            if let Some(bn) = &mut l.batch_norm {
                for (o, (m, v)) in bn.running_mean.iter_mut().zip(bn.running_var.iter_mut()).enumerate() {
                    *m = 0.1 * o as f64 - 0.2;
                    *v = 0.5 + 0.3 * o as f64;
                }
            }
        }
        let net = DenseNet::new(layers).unwrap();
        for loss in [Loss::Mse, Loss::Rmse] {
            let r = gradient_check(&net, &batch(3, 6, 5), &batch(3, 1, 6), loss).unwrap();
            assert!(r.max_rel_error < 1e-4, "{loss:?}: {r:?}");
            assert!(r.n_checked > r.n_excluded);
        }
    }

    #[test]
    fn training_pass_with_batch_statistics_and_dropout() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = DenseNet::new(vec![
            Layer::init(6, 5, Activation::Relu, true, 0.0, &mut rng),
            Layer::init(5, 4, Activation::Relu, true, 0.3, &mut rng),
            Layer::init(4, 2, Activation::Linear, false, 0.0, &mut rng),
        ])
        .unwrap();
        for loss in [Loss::Mse, Loss::Rmse] {
            let r = gradient_check_train(&net, &batch(5, 6, 12), &batch(5, 2, 13), loss, 14).unwrap();
            assert!(r.max_rel_error < 1e-4, "{loss:?}: {r:?}");
            assert!(r.n_checked > r.n_excluded);
        }
        assert!(gradient_check_train(&net, &batch(1, 6, 1), &batch(1, 2, 1), Loss::Mse, 0).is_err());
    }

    #[test]
    fn sampled_plan_caps_weights_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::new(vec![Layer::init(4, 2, Activation::Linear, false, 0.0, &mut rng)]).unwrap();
        let plan = CheckPlan {
            pass: CheckPass::Inference,
            weights_per_layer: Some(3),
            sample_seed: 1,
        };
        let r = gradient_check_plan(&net, &batch(3, 4, 2), &batch(3, 2, 3), Loss::Mse, &plan).unwrap();
        assert_eq!(r.n_checked, 3 + 2);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn detects_wrong_gradients() {
        // A probe on a deliberately broken copy must disagree with backprop of the original.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = DenseNet::new(vec![Layer::init(3, 2, Activation::Linear, false, 0.0, &mut rng)]).unwrap();
        let x = batch(2, 3, 8);
        let t = batch(2, 2, 9);
        let mut frozen = net.clone();
        let caches = frozen.forward(&x, Mode::Inference, None);
        let (_, d) = Loss::Mse.with_gradient(&caches[0].output, &t);
        let g = frozen.backward(&caches, &d, Mode::Inference);
        let probe = Probe {
            net: &frozen,
            caches: &caches,
            target: &t,
            loss: Loss::Mse,
            mode: Mode::Inference,
        };
        let num = (probe.loss_with(0, 1, Param::Weight(2), FD_STEP).unwrap()
            - probe.loss_with(0, 1, Param::Weight(2), -FD_STEP).unwrap())
            / (2.0 * FD_STEP);
        assert!((num - g[0].weights[5]).abs() < 1e-10);
        assert!((num - 2.0 * g[0].weights[5]).abs() > 1e-6 || num.abs() < 1e-9);
    }
}
