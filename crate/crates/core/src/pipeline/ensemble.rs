use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{read_json, write_json};
use crate::blup::BlupModel;
use crate::bundle::{
    blup_from_params, blup_params, codec_from_params, codec_params, net_from_params, net_params, net_topology,
    read_bundle, write_bundle, BundleBody, BundleHeader, BUNDLE_FORMAT, BUNDLE_VERSION,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::neural::{DenseNet, LatentCodec};
use crate::spectral::FeatureSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Blup,
    Nn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Blup => "blup",
            ModelKind::Nn => "nn",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "blup" => Ok(ModelKind::Blup),
            "nn" => Ok(ModelKind::Nn),
            other => Err(Error::InvalidInput(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlupMember {
    pub id: String,
    pub repetition: usize,
    pub model: BlupModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecMember {
    pub id: String,
    pub seed: u64,
    pub codec: LatentCodec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnMember {
    pub id: String,
    pub latent: usize,
    pub repetition: usize,
    pub seed: u64,
    /// Index into [`Ensemble::codecs`].
    pub codec: usize,
    pub classifier: DenseNet,
    pub history: Vec<f64>,
}

/// Every trained model of a run, tied to one feature space.
///
/// BLUP models read the first `k` bins per variable of the full feature vector;
/// networks read the first `nn_input_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub lineage: String,
    pub variables: Vec<String>,
    pub nn_input_k: usize,
    pub blup: Vec<BlupMember>,
    pub codecs: Vec<CodecMember>,
    pub nn: Vec<NnMember>,
}

/// Scores of every model for a batch of rows, plus the three ensemble means.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleScores {
    /// `[model][row]`, BLUP members first, then networks.
    pub per_model: Vec<Vec<f64>>,
    pub blup: Vec<f64>,
    pub nn: Vec<f64>,
    /// Unweighted mean over all models of both kinds.
    pub combined: Vec<f64>,
}

fn mean_rows(models: &[Vec<f64>], n: usize) -> Vec<f64> {
    (0..n)
        .map(|r| {
            if models.is_empty() {
                f64::NAN
            } else {
                models.iter().map(|m| m[r]).sum::<f64>() / models.len() as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnsembleIndex {
    format: String,
    version: u32,
    lineage: String,
    variables: Vec<String>,
    nn_input_k: usize,
    blup: Vec<String>,
    codecs: Vec<String>,
    nn: Vec<String>,
}

pub const ENSEMBLE_INDEX: &str = "ensemble.json";

impl Ensemble {
    pub fn n_models(&self) -> usize {
        self.blup.len() + self.nn.len()
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.blup.iter().map(|m| m.id.clone()).chain(self.nn.iter().map(|m| m.id.clone())).collect()
    }

    /// Fails unless the ensemble was trained on exactly this feature space.
    pub fn check_lineage(&self, space: &FeatureSpace) -> Result<()> {
        let expected = space.lineage();
        if self.lineage != expected {
            return Err(Error::LineageMismatch {
                model: "ensemble".into(),
                expected,
                found: self.lineage.clone(),
            });
        }
        Ok(())
    }

    /// Scores rows of full (`k_max`) feature vectors with every model.
    pub fn score(&self, space: &FeatureSpace, full: &Matrix) -> Result<EnsembleScores> {
        if self.n_models() == 0 {
            return Err(Error::InvalidInput("ensemble has no models".into()));
        }
        let n = full.rows();
        let project = |k: usize| -> Result<Matrix> {
            let rows = (0..n).map(|r| space.project(full.row(r), k)).collect::<Result<Vec<_>>>()?;
            let m = Matrix::from_rows(&rows)?;
            Ok(if n == 0 { Matrix::zeros(0, space.dim(k)) } else { m })
        };
        let mut per_model = Vec::with_capacity(self.n_models());
        let mut by_k: Vec<(usize, Matrix)> = Vec::new();
        for m in &self.blup {
            if !by_k.iter().any(|(k, _)| *k == m.model.k) {
                by_k.push((m.model.k, project(m.model.k)?));
            }
            let x = &by_k.iter().find(|(k, _)| *k == m.model.k).expect("projected").1;
            per_model.push(crate::blup::predict_blup(&m.model, x)?);
        }
        if !self.nn.is_empty() {
            let x = project(self.nn_input_k)?;
            let latents = self
                .codecs
                .iter()
                .map(|c| c.codec.encoder.predict(&x))
                .collect::<Result<Vec<_>>>()?;
            for m in &self.nn {
                per_model.push(m.classifier.predict(&latents[m.codec])?.into_vec());
            }
        }
        let nb = self.blup.len();
        Ok(EnsembleScores {
            blup: mean_rows(&per_model[..nb], n),
            nn: mean_rows(&per_model[nb..], n),
            combined: mean_rows(&per_model, n),
            per_model,
        })
    }

    fn header(&self, id: &str, seed: u64, repetition: Option<usize>, n_params: usize, body: BundleBody) -> BundleHeader {
        BundleHeader {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            id: id.into(),
            seed,
            repetition,
            lineage: self.lineage.clone(),
            variables: self.variables.clone(),
            n_params,
            params_file: format!("{id}.f32"),
            body,
        }
    }

    /// Writes one bundle per model plus an index; `dir` must already exist.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for m in &self.blup {
            let q = m.model.quantized();
            let p = blup_params(&q);
            let h = self.header(&m.id, q.seed, Some(m.repetition), p.len(), BundleBody::Blup { lambda: q.lambda, k: q.k });
            write_bundle(dir, &h, &p)?;
        }
        for c in &self.codecs {
            let p = codec_params(&c.codec);
            let body = BundleBody::Codec {
                latent: c.codec.latent_dim,
                n_blocks: c.codec.n_blocks,
                final_loss: c.codec.final_loss,
                history: c.codec.history.clone(),
                encoder: net_topology(&c.codec.encoder),
                decoder: net_topology(&c.codec.decoder),
            };
            write_bundle(dir, &self.header(&c.id, c.seed, None, p.len(), body), &p)?;
        }
        for m in &self.nn {
            let mut p = Vec::new();
            net_params(&m.classifier, &mut p);
            let body = BundleBody::Classifier {
                latent: m.latent,
                codec_id: self.codecs[m.codec].id.clone(),
                history: m.history.clone(),
                layers: net_topology(&m.classifier),
            };
            write_bundle(dir, &self.header(&m.id, m.seed, Some(m.repetition), p.len(), body), &p)?;
        }
        let index = EnsembleIndex {
            format: "drycss-ensemble".into(),
            version: 1,
            lineage: self.lineage.clone(),
            variables: self.variables.clone(),
            nn_input_k: self.nn_input_k,
            blup: self.blup.iter().map(|m| m.id.clone()).collect(),
            codecs: self.codecs.iter().map(|m| m.id.clone()).collect(),
            nn: self.nn.iter().map(|m| m.id.clone()).collect(),
        };
        write_json(&dir.join(ENSEMBLE_INDEX), &index)
    }

    pub fn load(dir: &Path) -> Result<Ensemble> {
        let index: EnsembleIndex = read_json(&dir.join(ENSEMBLE_INDEX))?;
        let check = |h: &BundleHeader| -> Result<()> {
            if h.lineage != index.lineage {
                return Err(Error::LineageMismatch {
                    model: h.id.clone(),
                    expected: index.lineage.clone(),
                    found: h.lineage.clone(),
                });
            }
            Ok(())
        };
        let mut blup = Vec::new();
        for id in &index.blup {
            let (h, p) = read_bundle(dir, id)?;
            check(&h)?;
            match &h.body {
                BundleBody::Blup { lambda, k } => blup.push(BlupMember {
                    id: id.clone(),
                    repetition: h.repetition.unwrap_or(0),
                    model: blup_from_params(*lambda, *k, h.seed, &p)?,
                }),
                _ => return Err(Error::Metadata(format!("bundle {id} is not a BLUP model"))),
            }
        }
        let mut codecs = Vec::new();
        for id in &index.codecs {
            let (h, p) = read_bundle(dir, id)?;
            check(&h)?;
            codecs.push(CodecMember {
                id: id.clone(),
                seed: h.seed,
                codec: codec_from_params(&h.body, &p)?,
            });
        }
        let mut nn = Vec::new();
        for id in &index.nn {
            let (h, p) = read_bundle(dir, id)?;
            check(&h)?;
            match &h.body {
                BundleBody::Classifier {
                    latent,
                    codec_id,
                    history,
                    layers,
                } => {
                    let codec = codecs
                        .iter()
                        .position(|c| &c.id == codec_id)
                        .ok_or_else(|| Error::Metadata(format!("bundle {id} references unknown codec {codec_id}")))?;
                    let mut rest: &[f32] = &p;
                    nn.push(NnMember {
                        id: id.clone(),
                        latent: *latent,
                        repetition: h.repetition.unwrap_or(0),
                        seed: h.seed,
                        codec,
                        classifier: net_from_params(layers, &mut rest)?,
                        history: history.clone(),
                    });
                }
                _ => return Err(Error::Metadata(format!("bundle {id} is not a classifier"))),
            }
        }
        Ok(Ensemble {
            lineage: index.lineage,
            variables: index.variables,
            nn_input_k: index.nn_input_k,
            blup,
            codecs,
            nn,
        })
    }
}
