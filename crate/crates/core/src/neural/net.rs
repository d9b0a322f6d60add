use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative; zero at the relu kink.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

/// Per-unit batch normalization applied to pre-activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(n: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; n],
            beta: vec![0.0; n],
            running_mean: vec![0.0; n],
            running_var: vec![1.0; n],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    fn frozen_scale(&self, o: usize) -> f64 {
        1.0 / (self.running_var[o] + self.eps).sqrt()
    }

    /// Normalization with running statistics for one unit.
    pub(crate) fn frozen(&self, o: usize, z: f64) -> f64 {
        self.gamma[o] * (z - self.running_mean[o]) * self.frozen_scale(o) + self.beta[o]
    }
}

/// Fully connected layer: `W x + b`, optional batch norm, activation, optional dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_out x n_in`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub batch_norm: Option<BatchNorm>,
    /// Elementwise dropout rate on the layer output during training.
    pub dropout: f64,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize, activation: Activation, batch_norm: bool, dropout: f64) -> Self {
        Layer {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
            activation,
            batch_norm: batch_norm.then(|| BatchNorm::new(n_out)),
            dropout,
        }
    }

    /// He-normal weights for relu layers, Glorot-normal for linear ones; zero biases.
    pub fn init(n_in: usize, n_out: usize, activation: Activation, batch_norm: bool, dropout: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut layer = Layer::zeros(n_in, n_out, activation, batch_norm, dropout);
        let var = match activation {
            Activation::Relu => 2.0 / n_in as f64,
            Activation::Linear => 2.0 / (n_in + n_out) as f64,
        };
        let normal = Normal::new(0.0, var.sqrt()).expect("positive variance");
        layer.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
        layer
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len() + self.batch_norm.as_ref().map_or(0, |b| 2 * b.gamma.len())
    }

    /// Pre-normalization outputs `W x + b` for a batch.
    pub(crate) fn affine(&self, x: &Matrix) -> Matrix {
        // axpy over transposed weights vectorizes where row-by-row dots do not
        let (n_in, n_out) = (self.n_in, self.n_out);
        let mut wt = vec![0.0; n_in * n_out];
        for o in 0..n_out {
            for i in 0..n_in {
                wt[i * n_out + o] = self.weights[o * n_in + i];
            }
        }
        let mut z = Matrix::zeros(x.rows(), n_out);
        for r in 0..x.rows() {
            let zr = z.row_mut(r);
            zr.copy_from_slice(&self.bias);
            for (i, &xi) in x.row(r).iter().enumerate() {
                if xi != 0.0 {
                    zr.iter_mut().zip(&wt[i * n_out..(i + 1) * n_out]).for_each(|(a, w)| *a += xi * w);
                }
            }
        }
        z
    }

    /// Normalization (running statistics) and activation for one unit.
    pub(crate) fn post_frozen(&self, o: usize, z: f64) -> (f64, f64) {
        let pre = match &self.batch_norm {
            Some(bn) => bn.frozen(o, z),
            None => z,
        };
        (pre, self.activation.apply(pre))
    }
}

/// Forward-pass record of one layer, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub input: Matrix,
    pub z: Matrix,
    /// Normalized pre-activations (batch norm only).
    pub xhat: Option<Matrix>,
    /// `1 / sqrt(var + eps)` per unit (batch norm only).
    pub inv_std: Vec<f64>,
    /// Activation input.
    pub pre: Matrix,
    /// Scaled keep mask (dropout only).
    pub mask: Option<Vec<f64>>,
    pub output: Matrix,
}

/// How batch norm and dropout behave in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics (running statistics updated), dropout active.
    Train,
    /// Running statistics, no dropout.
    Inference,
}

/// Parameter gradients, laid out like the layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
}

impl DenseNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out != pair[1].n_in {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} outputs {} values, layer {} expects {}",
                    pair[0].n_out,
                    i + 1,
                    pair[1].n_in
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(Error::DimensionMismatch(format!("layer {i} parameter shapes are inconsistent")));
            }
            if let Some(bn) = &l.batch_norm {
                let n = l.n_out;
                if [bn.gamma.len(), bn.beta.len(), bn.running_mean.len(), bn.running_var.len()].iter().any(|x| *x != n) {
                    return Err(Error::DimensionMismatch(format!("layer {i} batch norm shapes are inconsistent")));
                }
            }
            if !(0.0..=1.0).contains(&l.dropout) {
                return Err(Error::InvalidInput(format!("layer {i} dropout {} outside [0, 1]", l.dropout)));
            }
        }
        Ok(DenseNet { layers })
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| l.batch_norm.is_some())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().chain(&l.bias).all(|v| v.is_finite())
                && l.batch_norm.as_ref().is_none_or(|b| {
                    b.gamma.iter().chain(&b.beta).chain(&b.running_mean).all(|v| v.is_finite())
                        && b.running_var.iter().all(|v| v.is_finite() && *v >= 0.0)
                })
        })
    }

    /// Inference-mode outputs; rows are processed independently.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_in() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.n_in()
            )));
        }
        let mut a = x.clone();
        for layer in &self.layers {
            let mut z = layer.affine(&a);
            for r in 0..z.rows() {
                for (o, v) in z.row_mut(r).iter_mut().enumerate() {
                    *v = layer.post_frozen(o, *v).1;
                }
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass keeping every intermediate for [`DenseNet::backward`].
    ///
    /// In [`Mode::Train`] batch-norm running statistics are updated in place.
    pub(crate) fn forward(&mut self, x: &Matrix, mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Vec<LayerCache> {
        let mut rng = rng;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for layer in &mut self.layers {
            let z = layer.affine(&a);
            let n = z.rows();
            let mut pre = z.clone();
            let mut xhat = None;
            let mut inv_std = Vec::new();
            if let Some(bn) = &mut layer.batch_norm {
                match mode {
                    Mode::Train => {
                        let mut xh = z.clone();
                        inv_std = vec![0.0; layer.n_out];
                        for o in 0..layer.n_out {
                            let mean = (0..n).map(|r| z.get(r, o)).sum::<f64>() / n as f64;
                            let var = (0..n).map(|r| (z.get(r, o) - mean).powi(2)).sum::<f64>() / n as f64;
                            let is = 1.0 / (var + bn.eps).sqrt();
                            inv_std[o] = is;
                            for r in 0..n {
                                let h = (z.get(r, o) - mean) * is;
                                xh.set(r, o, h);
                                pre.set(r, o, bn.gamma[o] * h + bn.beta[o]);
                            }
                            bn.running_mean[o] = bn.momentum * bn.running_mean[o] + (1.0 - bn.momentum) * mean;
                            bn.running_var[o] = bn.momentum * bn.running_var[o] + (1.0 - bn.momentum) * var;
                        }
                        xhat = Some(xh);
                    }
                    Mode::Inference => {
                        inv_std = (0..layer.n_out).map(|o| bn.frozen_scale(o)).collect();
                        let mut xh = z.clone();
                        for r in 0..n {
                            for o in 0..layer.n_out {
                                let h = (z.get(r, o) - bn.running_mean[o]) * inv_std[o];
                                xh.set(r, o, h);
                                pre.set(r, o, bn.gamma[o] * h + bn.beta[o]);
                            }
                        }
                        xhat = Some(xh);
                    }
                }
            }
            let mut out = pre.clone();
            out.as_mut_slice().iter_mut().for_each(|v| *v = layer.activation.apply(*v));
            let mut mask = None;
            if mode == Mode::Train && layer.dropout > 0.0 {
                let rng = rng.as_deref_mut().expect("training forward needs an rng");
                let keep = 1.0 - layer.dropout;
                let m: Vec<f64> = (0..out.as_slice().len())
                    .map(|_| if keep > 0.0 && rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                out.as_mut_slice().iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
                mask = Some(m);
            }
            caches.push(LayerCache {
                input: a,
                z,
                xhat,
                inv_std,
                pre,
                mask,
                output: out.clone(),
            });
            a = out;
        }
        caches
    }

    /// Gradients of a loss given its derivative with respect to the network output.
    ///
    /// `mode` must match the forward pass that produced `caches`.
    pub(crate) fn backward(&self, caches: &[LayerCache], d_out: &Matrix, mode: Mode) -> Vec<LayerGrad> {
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut d = d_out.clone();
        for (li, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let n = d.rows();
            if let Some(mask) = &cache.mask {
                d.as_mut_slice().iter_mut().zip(mask).for_each(|(g, k)| *g *= k);
            }
            for (g, p) in d.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
                *g *= layer.activation.derivative(*p);
            }
            let (mut gamma, mut beta) = (Vec::new(), Vec::new());
            let dz = if let Some(bn) = &layer.batch_norm {
                let xhat = cache.xhat.as_ref().expect("batch norm cache");
                gamma = vec![0.0; layer.n_out];
                beta = vec![0.0; layer.n_out];
                let mut dz = Matrix::zeros(n, layer.n_out);
                for o in 0..layer.n_out {
                    let (mut sg, mut sb) = (0.0, 0.0);
                    for r in 0..n {
                        sg += d.get(r, o) * xhat.get(r, o);
                        sb += d.get(r, o);
                    }
                    gamma[o] = sg;
                    beta[o] = sb;
                    let is = cache.inv_std[o];
                    match mode {
                        Mode::Train => {
                            // d/dz of gamma * (z - mean) / std over the batch
                            let nf = n as f64;
                            for r in 0..n {
                                let dxh = d.get(r, o) * bn.gamma[o];
                                let v = is / nf * (nf * dxh - bn.gamma[o] * sb - xhat.get(r, o) * bn.gamma[o] * sg);
                                dz.set(r, o, v);
                            }
                        }
                        Mode::Inference => {
                            for r in 0..n {
                                dz.set(r, o, d.get(r, o) * bn.gamma[o] * is);
                            }
                        }
                    }
                }
                dz
            } else {
                d
            };
            let mut gw = vec![0.0; layer.weights.len()];
            let mut gb = vec![0.0; layer.n_out];
            // the input gradient of the first layer is never consumed
            let need_dx = li > 0;
            let mut dx = Matrix::zeros(if need_dx { n } else { 0 }, layer.n_in);
            for o in 0..layer.n_out {
                let w = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                let gwo = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                for r in 0..n {
                    let g = dz.get(r, o);
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    gwo.iter_mut().zip(cache.input.row(r)).for_each(|(a, x)| *a += g * x);
                    if need_dx {
                        dx.row_mut(r).iter_mut().zip(w).for_each(|(a, w)| *a += g * w);
                    }
                }
            }
            grads.push(LayerGrad {
                weights: gw,
                bias: gb,
                gamma,
                beta,
            });
            d = dx;
        }
        grads.reverse();
        grads
    }

    /// Mutable views of every trainable parameter block, in gradient order.
    pub(crate) fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
            if let Some(bn) = &mut l.batch_norm {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    /// Rounds every parameter and running statistic to the nearest `f32`.
    pub fn quantize(&mut self) {
        let q = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = *x as f32 as f64);
        for l in &mut self.layers {
            q(&mut l.weights);
            q(&mut l.bias);
            if let Some(bn) = &mut l.batch_norm {
                q(&mut bn.gamma);
                q(&mut bn.beta);
                q(&mut bn.running_mean);
                q(&mut bn.running_var);
            }
        }
    }
}

pub(crate) fn grad_blocks(grads: &[LayerGrad]) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = Vec::new();
    for g in grads {
        out.push(&g.weights);
        out.push(&g.bias);
        if !g.gamma.is_empty() {
            out.push(&g.gamma);
            out.push(&g.beta);
        }
    }
    out
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean over all entries of the squared error.
    Mse,
    /// Square root of [`Loss::Mse`].
    Rmse,
}

impl Loss {
    pub fn value(self, out: &Matrix, target: &Matrix) -> f64 {
        let n = out.as_slice().len() as f64;
        let mse = out
            .as_slice()
            .iter()
            .zip(target.as_slice())
            .map(|(a, t)| (a - t) * (a - t))
            .sum::<f64>()
            / n;
        match self {
            Loss::Mse => mse,
            Loss::Rmse => mse.sqrt(),
        }
    }

    /// Loss and its derivative with respect to every output entry.
    pub fn with_gradient(self, out: &Matrix, target: &Matrix) -> (f64, Matrix) {
        let n = out.as_slice().len() as f64;
        let value = self.value(out, target);
        let scale = match self {
            Loss::Mse => 2.0 / n,
            // d sqrt(m) = dm / (2 sqrt(m)); vanishes at a perfect fit
            Loss::Rmse => {
                if value < 1e-12 {
                    0.0
                } else {
                    1.0 / (n * value)
                }
            }
        };
        let data = out
            .as_slice()
            .iter()
            .zip(target.as_slice())
            .map(|(a, t)| scale * (a - t))
            .collect();
        let grad = Matrix::from_vec(out.rows(), out.cols(), data).expect("same shape");
        (value, grad)
    }
}
