//! Model bundles: a JSON header plus a flat little-endian `f32` parameter file.
//!
//! BLUP models, autoencoders and classifiers share the envelope; the `body`
//! carries the kind-specific topology.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binio::{read_f32_le, read_json, write_f32_le, write_json};
use crate::blup::BlupModel;
use crate::error::{Error, Result};
use crate::neural::{Activation, BatchNorm, DenseNet, Layer, LatentCodec};

pub const BUNDLE_FORMAT: &str = "drycss-model";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
    pub batch_norm: bool,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BundleBody {
    /// Parameters: intercept, then effects.
    Blup { lambda: f64, k: usize },
    /// Parameters: encoder, then decoder.
    Codec {
        latent: usize,
        n_blocks: usize,
        final_loss: f64,
        history: Vec<f64>,
        encoder: Vec<LayerSpec>,
        decoder: Vec<LayerSpec>,
    },
    /// Parameters: classifier network.
    Classifier {
        latent: usize,
        codec_id: String,
        history: Vec<f64>,
        layers: Vec<LayerSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub format: String,
    pub version: u32,
    pub id: String,
    pub seed: u64,
    pub repetition: Option<usize>,
    /// Content hash of the feature space the model consumes.
    pub lineage: String,
    pub variables: Vec<String>,
    pub n_params: usize,
    pub params_file: String,
    pub body: BundleBody,
}

pub fn net_topology(net: &DenseNet) -> Vec<LayerSpec> {
    net.layers
        .iter()
        .map(|l| LayerSpec {
            n_in: l.n_in,
            n_out: l.n_out,
            activation: l.activation,
            batch_norm: l.batch_norm.is_some(),
            bn_momentum: l.batch_norm.as_ref().map_or(0.0, |b| b.momentum),
            bn_eps: l.batch_norm.as_ref().map_or(0.0, |b| b.eps),
            dropout: l.dropout,
        })
        .collect()
}

/// Per layer: weights, bias, then gamma, beta, running mean, running variance.
pub fn net_params(net: &DenseNet, out: &mut Vec<f64>) {
    for l in &net.layers {
        out.extend_from_slice(&l.weights);
        out.extend_from_slice(&l.bias);
        if let Some(bn) = &l.batch_norm {
            out.extend_from_slice(&bn.gamma);
            out.extend_from_slice(&bn.beta);
            out.extend_from_slice(&bn.running_mean);
            out.extend_from_slice(&bn.running_var);
        }
    }
}

fn take<'a>(params: &mut &'a [f32], n: usize) -> Result<Vec<f64>> {
    if params.len() < n {
        return Err(Error::Metadata("parameter file is shorter than the topology requires".into()));
    }
    let (head, tail) = params.split_at(n);
    *params = tail;
    Ok(head.iter().map(|v| *v as f64).collect())
}

pub fn net_from_params(topology: &[LayerSpec], params: &mut &[f32]) -> Result<DenseNet> {
    let mut layers = Vec::with_capacity(topology.len());
    for s in topology {
        let weights = take(params, s.n_in * s.n_out)?;
        let bias = take(params, s.n_out)?;
        let batch_norm = if s.batch_norm {
            Some(BatchNorm {
                gamma: take(params, s.n_out)?,
                beta: take(params, s.n_out)?,
                running_mean: take(params, s.n_out)?,
                running_var: take(params, s.n_out)?,
                momentum: s.bn_momentum,
                eps: s.bn_eps,
            })
        } else {
            None
        };
        layers.push(Layer {
            n_in: s.n_in,
            n_out: s.n_out,
            weights,
            bias,
            activation: s.activation,
            batch_norm,
            dropout: s.dropout,
        });
    }
    DenseNet::new(layers)
}

/// Writes `<dir>/<id>.json` and `<dir>/<id>.f32`. Values must be `f32`-representable.
pub fn write_bundle(dir: &Path, header: &BundleHeader, params: &[f64]) -> Result<()> {
    if header.n_params != params.len() {
        return Err(Error::Metadata(format!(
            "bundle {}: header declares {} parameters, {} given",
            header.id,
            header.n_params,
            params.len()
        )));
    }
    let narrowed: Vec<f32> = params.iter().map(|v| *v as f32).collect();
    write_f32_le(&dir.join(&header.params_file), &narrowed)?;
    write_json(&header_path(dir, &header.id), header)
}

pub fn header_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

pub fn read_bundle(dir: &Path, id: &str) -> Result<(BundleHeader, Vec<f32>)> {
    let header: BundleHeader = read_json(&header_path(dir, id))?;
    if header.format != BUNDLE_FORMAT || header.version != BUNDLE_VERSION {
        return Err(Error::Metadata(format!(
            "bundle {id}: unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let path = dir.join(&header.params_file);
    let params = read_f32_le(&path)?;
    if params.len() != header.n_params {
        return Err(Error::Metadata(format!(
            "{}: {} parameters, header declares {}",
            path.display(),
            params.len(),
            header.n_params
        )));
    }
    Ok((header, params))
}

pub fn blup_params(model: &BlupModel) -> Vec<f64> {
    let mut p = Vec::with_capacity(model.effects.len() + 1);
    p.push(model.intercept);
    p.extend_from_slice(&model.effects);
    p
}

pub fn blup_from_params(lambda: f64, k: usize, seed: u64, params: &[f32]) -> Result<BlupModel> {
    let (first, rest) = params
        .split_first()
        .ok_or_else(|| Error::Metadata("empty BLUP parameter file".into()))?;
    Ok(BlupModel {
        intercept: *first as f64,
        effects: rest.iter().map(|v| *v as f64).collect(),
        lambda,
        k,
        seed,
    })
}

pub fn codec_params(codec: &LatentCodec) -> Vec<f64> {
    let mut p = Vec::new();
    net_params(&codec.encoder, &mut p);
    net_params(&codec.decoder, &mut p);
    p
}

pub fn codec_from_params(body: &BundleBody, params: &[f32]) -> Result<LatentCodec> {
    match body {
        BundleBody::Codec {
            latent,
            n_blocks,
            final_loss,
            history,
            encoder,
            decoder,
        } => {
            let mut rest = params;
            let enc = net_from_params(encoder, &mut rest)?;
            let dec = net_from_params(decoder, &mut rest)?;
            if !rest.is_empty() {
                return Err(Error::Metadata("codec parameter file has trailing values".into()));
            }
            Ok(LatentCodec {
                encoder: enc,
                decoder: dec,
                latent_dim: *latent,
                n_blocks: *n_blocks,
                final_loss: *final_loss,
                history: history.clone(),
            })
        }
        _ => Err(Error::Metadata("bundle is not an autoencoder".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{build_autoencoder, Hyperparams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn header(id: &str, n: usize, body: BundleBody) -> BundleHeader {
        BundleHeader {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            id: id.into(),
            seed: u64::MAX - 3,
            repetition: Some(2),
            lineage: "abc".into(),
            variables: vec!["t2m".into()],
            n_params: n,
            params_file: format!("{id}.f32"),
            body,
        }
    }

    #[test]
    fn codec_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut encoder, mut decoder) = build_autoencoder(16, 4, &Hyperparams::default(), &mut rng).unwrap();
        encoder.quantize();
        decoder.quantize();
        let codec = LatentCodec {
            encoder,
            decoder,
            latent_dim: 4,
            n_blocks: 2,
            final_loss: 0.123,
            history: vec![1.0, 0.5],
        };
        let params = codec_params(&codec);
        let body = BundleBody::Codec {
            latent: 4,
            n_blocks: 2,
            final_loss: 0.123,
            history: vec![1.0, 0.5],
            encoder: net_topology(&codec.encoder),
            decoder: net_topology(&codec.decoder),
        };
        let h = header("codec-l4", params.len(), body);
        write_bundle(dir.path(), &h, &params).unwrap();
        let (back, p) = read_bundle(dir.path(), "codec-l4").unwrap();
        assert_eq!(back, h);
        assert_eq!(codec_from_params(&back.body, &p).unwrap(), codec);
    }

    #[test]
    fn blup_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let m = BlupModel {
            effects: vec![0.25, -1.5, 3.0],
            intercept: 0.5,
            lambda: 6.0,
            k: 1,
            seed: 9,
        };
        let h = header("blup-k1-r0", 4, BundleBody::Blup { lambda: 6.0, k: 1 });
        write_bundle(dir.path(), &h, &blup_params(&m)).unwrap();
        let (_, p) = read_bundle(dir.path(), "blup-k1-r0").unwrap();
        assert_eq!(blup_from_params(6.0, 1, 9, &p).unwrap(), m);
        std::fs::write(dir.path().join("blup-k1-r0.f32"), [0u8; 8]).unwrap();
        assert!(read_bundle(dir.path(), "blup-k1-r0").is_err());
    }
}
