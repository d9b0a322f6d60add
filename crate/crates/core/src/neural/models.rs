use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::net::{Activation, DenseNet, Layer, Loss};
use super::train::{fit, Hyperparams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Classifier hidden widths after the latent input.
pub const CLASSIFIER_HIDDEN: [usize; 2] = [64, 32];

/// Hidden widths of the hourglass encoder: `p/2, p/4, ...` while above `latent`.
pub fn hourglass_widths(p: usize, latent: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut w = p / 2;
    while w > latent {
        out.push(w);
        w /= 2;
    }
    out
}

fn hidden_activation(hp: &Hyperparams) -> Activation {
    if hp.linear_only {
        Activation::Linear
    } else {
        Activation::Relu
    }
}

/// Encoder `p -> hidden... -> latent` and mirrored decoder `latent -> ...reversed -> p`.
pub fn build_autoencoder(p: usize, latent: usize, hp: &Hyperparams, rng: &mut ChaCha8Rng) -> Result<(DenseNet, DenseNet)> {
    if latent == 0 || latent > p {
        return Err(Error::InvalidInput(format!("latent size {latent} outside 1..={p}")));
    }
    let act = hidden_activation(hp);
    let bn = hp.batch_norm && !hp.linear_only;
    let widths = hourglass_widths(p, latent);
    let mut enc = Vec::new();
    let mut prev = p;
    for &w in &widths {
        enc.push(Layer::init(prev, w, act, bn, 0.0, rng));
        prev = w;
    }
    enc.push(Layer::init(prev, latent, Activation::Linear, false, 0.0, rng));
    let mut dec = Vec::new();
    prev = latent;
    for &w in widths.iter().rev() {
        dec.push(Layer::init(prev, w, act, bn, 0.0, rng));
        prev = w;
    }
    dec.push(Layer::init(prev, p, Activation::Linear, false, 0.0, rng));
    Ok((DenseNet::new(enc)?, DenseNet::new(dec)?))
}

/// Classifier `latent -> 64 -> 32 -> 1` with dropout on hidden outputs.
pub fn build_classifier(latent: usize, hp: &Hyperparams, rng: &mut ChaCha8Rng) -> Result<DenseNet> {
    let act = hidden_activation(hp);
    let mut layers = Vec::new();
    let mut prev = latent;
    for &w in &CLASSIFIER_HIDDEN {
        layers.push(Layer::init(prev, w, act, false, hp.dropout, rng));
        prev = w;
    }
    layers.push(Layer::init(prev, 1, Activation::Linear, false, 0.0, rng));
    DenseNet::new(layers)
}

/// Encoder/decoder pair trained to reconstruct standardized spectral features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCodec {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    pub latent_dim: usize,
    /// Number of per-variable coordinate blocks in the input.
    pub n_blocks: usize,
    /// Inference-mode reconstruction MSE on the training inputs.
    pub final_loss: f64,
    /// Mean batch loss per epoch.
    pub history: Vec<f64>,
}

/// Trains an autoencoder on `x` (`n x p`), `p` split into `n_blocks` equal variable blocks.
///
/// Training inputs receive Gaussian noise, then each variable block of each row
/// is zeroed with probability `hp.dropout` (survivors scaled by `1/(1-rate)`);
/// the reconstruction target is always the clean row.
pub fn train_autoencoder(x: &Matrix, n_blocks: usize, latent_dim: usize, hp: &Hyperparams, seed: u64) -> Result<LatentCodec> {
    let p = x.cols();
    if n_blocks == 0 || p % n_blocks != 0 {
        return Err(Error::InvalidInput(format!("{p} features do not split into {n_blocks} variable blocks")));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite autoencoder input".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (enc, dec) = build_autoencoder(p, latent_dim, hp, &mut rng)?;
    let mut layers = enc.layers.clone();
    layers.extend(dec.layers.iter().cloned());
    let mut joint = DenseNet::new(layers)?;
    let block = p / n_blocks;
    let noise = Normal::new(0.0, hp.noise_std.max(0.0)).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let rate = hp.dropout;
    let mut augment = |batch: &mut Matrix, rng: &mut ChaCha8Rng| {
        if hp.noise_std > 0.0 {
            batch.as_mut_slice().iter_mut().for_each(|v| *v += noise.sample(rng));
        }
        if rate > 0.0 {
            let scale = if rate < 1.0 { 1.0 / (1.0 - rate) } else { 1.0 };
            for r in 0..batch.rows() {
                let row = batch.row_mut(r);
                for b in 0..n_blocks {
                    let drop = rng.random::<f64>() < rate;
                    for v in &mut row[b * block..(b + 1) * block] {
                        *v = if drop { 0.0 } else { *v * scale };
                    }
                }
            }
        }
    };
    let history = fit(&mut joint, x, x, Loss::Mse, hp, &mut rng, &mut augment)?;
    let n_enc = enc.layers.len();
    let decoder = DenseNet::new(joint.layers.split_off(n_enc))?;
    let encoder = DenseNet::new(joint.layers)?;
    let recon = decoder.predict(&encoder.predict(x)?)?;
    let final_loss = Loss::Mse.value(&recon, x);
    Ok(LatentCodec {
        encoder,
        decoder,
        latent_dim,
        n_blocks,
        final_loss,
        history,
    })
}

pub fn encode(codec: &LatentCodec, x: &Matrix) -> Result<Matrix> {
    codec.encoder.predict(x)
}

/// Trained classifier with its per-epoch mean batch RMSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierFit {
    pub net: DenseNet,
    pub history: Vec<f64>,
}

/// Trains the latent-to-score regressor with RMSE loss against 0/1 labels.
pub fn train_classifier(z: &Matrix, y: &[f64], hp: &Hyperparams, seed: u64) -> Result<ClassifierFit> {
    if y.len() != z.rows() {
        return Err(Error::DimensionMismatch(format!("{} labels for {} latent rows", y.len(), z.rows())));
    }
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidInput("classifier labels must be 0 or 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = build_classifier(z.cols(), hp, &mut rng)?;
    let targets = Matrix::from_vec(y.len(), 1, y.to_vec())?;
    let history = fit(&mut net, z, &targets, Loss::Rmse, hp, &mut rng, &mut |_, _| {})?;
    Ok(ClassifierFit { net, history })
}

/// Scores feature rows through the encoder and classifier; unclamped.
pub fn predict_nn(classifier: &DenseNet, codec: &LatentCodec, x: &Matrix) -> Result<Vec<f64>> {
    if classifier.n_in() != codec.latent_dim {
        return Err(Error::DimensionMismatch(format!(
            "classifier expects {} latent values, codec produces {}",
            classifier.n_in(),
            codec.latent_dim
        )));
    }
    Ok(classifier.predict(&encode(codec, x)?)?.into_vec())
}
