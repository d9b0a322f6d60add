use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dft::Dft;
use super::selection::{FrequencyScorer, FrequencySelection, RankingRule};
use crate::error::{Error, Result};

/// Lower bound applied to every standard deviation in the table.
pub const STD_FLOOR: f64 = 1e-12;

pub const FEATURE_SPACE_FORMAT: &str = "drycss-feature-space";
pub const FEATURE_SPACE_VERSION: u32 = 1;

/// Training-set mean and standard deviation of each retained coefficient.
///
/// Entries are laid out `[variable][rank]`, matching the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTable {
    pub mean_re: Vec<f64>,
    pub std_re: Vec<f64>,
    pub mean_im: Vec<f64>,
    pub std_im: Vec<f64>,
}

impl NormalizationTable {
    /// Population statistics of `rows`, each `[variable][rank]` coefficients.
    pub fn fit(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInput("normalization needs at least one training sample".into()));
        }
        let dim = rows[0].len();
        let mut mean_re = vec![0.0; dim];
        let mut mean_im = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch("ragged coefficient rows".into()));
            }
            for (i, c) in r.iter().enumerate() {
                mean_re[i] += c.re;
                mean_im[i] += c.im;
            }
        }
        mean_re.iter_mut().chain(mean_im.iter_mut()).for_each(|m| *m /= n as f64);
        let mut var_re = vec![0.0; dim];
        let mut var_im = vec![0.0; dim];
        for r in rows {
            for (i, c) in r.iter().enumerate() {
                var_re[i] += (c.re - mean_re[i]).powi(2);
                var_im[i] += (c.im - mean_im[i]).powi(2);
            }
        }
        let to_std = |v: Vec<f64>| v.into_iter().map(|s| (s / n as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(NormalizationTable {
            mean_re,
            std_re: to_std(var_re),
            mean_im,
            std_im: to_std(var_im),
        })
    }

    pub fn len(&self) -> usize {
        self.mean_re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_re.is_empty()
    }
}

/// Frequency selection plus normalization, fitted on training samples only.
///
/// Fitted once at `k_max`; the space for any smaller `k` keeps the first `k`
/// ranked bins of each variable and the matching table entries. Feature vectors
/// are laid out `[variable][rank][re, im]`, `n_variables * k * 2` long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub format: String,
    pub version: u32,
    pub variables: Vec<String>,
    pub selection: FrequencySelection,
    pub norm: NormalizationTable,
}

impl FeatureSpace {
    /// Fits selection and normalization from training series `[sample][variable][t]`.
    pub fn fit(variables: &[String], training: &[Vec<Vec<f64>>], k_max: usize, rule: RankingRule) -> Result<Self> {
        let first = training
            .first()
            .ok_or_else(|| Error::InvalidInput("feature space needs at least one training sample".into()))?;
        let n_steps = first.first().map(|s| s.len()).unwrap_or(0);
        let dft = Dft::new(n_steps)?;
        let spectra = |sample: &Vec<Vec<f64>>| -> Result<Vec<Vec<Complex64>>> {
            if sample.len() != variables.len() {
                return Err(Error::DimensionMismatch(format!(
                    "sample has {} variables, expected {}",
                    sample.len(),
                    variables.len()
                )));
            }
            sample.iter().map(|s| dft.coefficients(s)).collect()
        };
        let mut scorer = FrequencyScorer::new(variables.len(), n_steps, rule);
        for sample in training {
            scorer.add(&spectra(sample)?)?;
        }
        let selection = scorer.select(k_max)?;
        let rows = training
            .iter()
            .map(|s| Ok(gather(&spectra(s)?, &selection)))
            .collect::<Result<Vec<_>>>()?;
        let norm = NormalizationTable::fit(&rows)?;
        Ok(FeatureSpace {
            format: FEATURE_SPACE_FORMAT.into(),
            version: FEATURE_SPACE_VERSION,
            variables: variables.to_vec(),
            selection,
            norm,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.selection.n_steps
    }

    pub fn k_max(&self) -> usize {
        self.selection.k
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    /// Feature vector length at `k` bins per variable.
    pub fn dim(&self, k: usize) -> usize {
        self.n_variables() * k * 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != FEATURE_SPACE_FORMAT || self.version != FEATURE_SPACE_VERSION {
            return Err(Error::Metadata(format!(
                "unsupported feature space {} v{}",
                self.format, self.version
            )));
        }
        self.selection.validate()?;
        if self.selection.n_variables() != self.n_variables() {
            return Err(Error::Metadata("selection and variable list disagree".into()));
        }
        let dim = self.n_variables() * self.k_max();
        let t = &self.norm;
        if [t.mean_re.len(), t.std_re.len(), t.mean_im.len(), t.std_im.len()].iter().any(|l| *l != dim) {
            return Err(Error::Metadata("normalization table does not match the selection".into()));
        }
        if t.std_re.iter().chain(&t.std_im).any(|s| !(*s >= STD_FLOOR)) {
            return Err(Error::Metadata("normalization table has a standard deviation below the floor".into()));
        }
        Ok(())
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.k_max() {
            return Err(Error::InvalidInput(format!("k = {k} outside 1..={}", self.k_max())));
        }
        Ok(())
    }

    /// Standardized features from precomputed one-sided spectra, one per variable.
    pub fn featurize_spectra(&self, spectra: &[Vec<Complex64>], k: usize) -> Result<Vec<f64>> {
        self.check_k(k)?;
        if spectra.len() != self.n_variables() {
            return Err(Error::DimensionMismatch(format!(
                "{} spectra for {} variables",
                spectra.len(),
                self.n_variables()
            )));
        }
        let k_max = self.k_max();
        let t = &self.norm;
        let mut out = Vec::with_capacity(self.dim(k));
        for (v, spec) in spectra.iter().enumerate() {
            for (r, &j) in self.selection.bins[v][..k].iter().enumerate() {
                let c = spec
                    .get(j)
                    .ok_or_else(|| Error::DimensionMismatch(format!("spectrum lacks bin {j}")))?;
                let i = v * k_max + r;
                out.push((c.re - t.mean_re[i]) / t.std_re[i]);
                out.push((c.im - t.mean_im[i]) / t.std_im[i]);
            }
        }
        Ok(out)
    }

    /// Standardized features of one location's series, one per variable.
    pub fn featurize(&self, dft: &Dft, series: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
        if dft.n_steps() != self.n_steps() {
            return Err(Error::DimensionMismatch(format!(
                "series length {} differs from the fitted length {}",
                dft.n_steps(),
                self.n_steps()
            )));
        }
        let spectra = series.iter().map(|s| dft.coefficients(s)).collect::<Result<Vec<_>>>()?;
        self.featurize_spectra(&spectra, k)
    }

    /// Restricts a `k_max` feature vector to its first `k` bins per variable.
    pub fn project(&self, full: &[f64], k: usize) -> Result<Vec<f64>> {
        self.check_k(k)?;
        if full.len() != self.dim(self.k_max()) {
            return Err(Error::DimensionMismatch(format!(
                "feature vector has {} entries, expected {}",
                full.len(),
                self.dim(self.k_max())
            )));
        }
        let stride = 2 * self.k_max();
        Ok(full.chunks(stride).flat_map(|block| block[..2 * k].iter().copied()).collect())
    }

    /// Content hash identifying this feature space; models record it as lineage.
    pub fn lineage(&self) -> String {
        let json = serde_json::to_vec(self).expect("feature space serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn gather(spectra: &[Vec<Complex64>], selection: &FrequencySelection) -> Vec<Complex64> {
    spectra
        .iter()
        .zip(&selection.bins)
        .flat_map(|(s, bins)| bins.iter().map(move |j| s[*j]))
        .collect()
}
