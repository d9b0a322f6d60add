use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dft::{bin_weight, n_bins};
use crate::error::{Error, Result};

/// How frequency bins are scored before taking the top `k` per variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingRule {
    /// Mean over samples of the bin's share of series energy, `w_j |X_j|^2`.
    ///
    /// Keeping the top `k` bins under this score minimizes the mean squared
    /// error of the `k`-bin reconstruction.
    #[default]
    MeanEnergy,
    /// Mean over samples of the bin amplitude `w_j |X_j|`.
    MeanAmplitude,
}

impl RankingRule {
    pub fn score(self, c: Complex64, j: usize, n_steps: usize) -> f64 {
        let w = bin_weight(j, n_steps);
        match self {
            RankingRule::MeanEnergy => w * c.norm_sqr(),
            RankingRule::MeanAmplitude => w * c.norm(),
        }
    }
}

/// Retained bins per variable, best first.
///
/// The selection for any `k' <= k` is the per-variable prefix of length `k'`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencySelection {
    pub n_steps: usize,
    pub k: usize,
    pub rule: RankingRule,
    pub bins: Vec<Vec<usize>>,
}

impl FrequencySelection {
    pub fn n_variables(&self) -> usize {
        self.bins.len()
    }

    pub fn truncate(&self, k: usize) -> Result<FrequencySelection> {
        if k == 0 || k > self.k {
            return Err(Error::InvalidInput(format!("cannot truncate a {}-bin selection to {k}", self.k)));
        }
        Ok(FrequencySelection {
            n_steps: self.n_steps,
            k,
            rule: self.rule,
            bins: self.bins.iter().map(|b| b[..k].to_vec()).collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let nb = n_bins(self.n_steps);
        for (v, b) in self.bins.iter().enumerate() {
            if b.len() != self.k {
                return Err(Error::DimensionMismatch(format!("variable {v} keeps {} bins, expected {}", b.len(), self.k)));
            }
            for (i, j) in b.iter().enumerate() {
                if *j >= nb || b[..i].contains(j) {
                    return Err(Error::Metadata(format!("variable {v}: invalid or repeated bin {j}")));
                }
            }
        }
        Ok(())
    }
}

/// Streaming accumulator of per-variable bin scores over training samples.
#[derive(Debug, Clone)]
pub struct FrequencyScorer {
    n_steps: usize,
    rule: RankingRule,
    sums: Vec<Vec<f64>>,
    n_samples: usize,
}

impl FrequencyScorer {
    pub fn new(n_variables: usize, n_steps: usize, rule: RankingRule) -> Self {
        FrequencyScorer {
            n_steps,
            rule,
            sums: vec![vec![0.0; n_bins(n_steps)]; n_variables],
            n_samples: 0,
        }
    }

    /// Adds one sample given as one-sided spectra per variable.
    pub fn add(&mut self, spectra: &[Vec<Complex64>]) -> Result<()> {
        if spectra.len() != self.sums.len() {
            return Err(Error::DimensionMismatch(format!(
                "sample has {} variables, expected {}",
                spectra.len(),
                self.sums.len()
            )));
        }
        for (sum, spec) in self.sums.iter_mut().zip(spectra) {
            if spec.len() != sum.len() {
                return Err(Error::DimensionMismatch(format!("spectrum has {} bins, expected {}", spec.len(), sum.len())));
            }
            for (j, (s, c)) in sum.iter_mut().zip(spec).enumerate() {
                *s += self.rule.score(*c, j, self.n_steps);
            }
        }
        self.n_samples += 1;
        Ok(())
    }

    /// Mean score per variable and bin.
    pub fn mean_scores(&self) -> Vec<Vec<f64>> {
        let n = self.n_samples.max(1) as f64;
        self.sums.iter().map(|s| s.iter().map(|x| x / n).collect()).collect()
    }

    /// Top `k` bins per variable; ties go to the lower bin index.
    pub fn select(&self, k: usize) -> Result<FrequencySelection> {
        if self.n_samples == 0 {
            return Err(Error::InvalidInput("frequency selection needs at least one training sample".into()));
        }
        let nb = n_bins(self.n_steps);
        if k == 0 || k > nb {
            return Err(Error::InvalidInput(format!("k = {k} outside 1..={nb} available bins")));
        }
        let bins = self
            .mean_scores()
            .iter()
            .map(|scores| {
                let mut order: Vec<usize> = (0..nb).collect();
                order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
                order.truncate(k);
                order
            })
            .collect();
        Ok(FrequencySelection {
            n_steps: self.n_steps,
            k,
            rule: self.rule,
            bins,
        })
    }
}

/// Ranks bins from training samples given as `[sample][variable]` one-sided spectra.
pub fn select_frequencies(spectra: &[Vec<Vec<Complex64>>], n_steps: usize, k: usize, rule: RankingRule) -> Result<FrequencySelection> {
    let n_vars = spectra.first().map(|s| s.len()).unwrap_or(0);
    let mut scorer = FrequencyScorer::new(n_vars, n_steps, rule);
    for s in spectra {
        scorer.add(s)?;
    }
    scorer.select(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::dft_coefficients;
    use std::f64::consts::PI;

    fn two_tone(t: usize) -> Vec<f64> {
        (0..t)
            .map(|i| {
                let x = i as f64 / t as f64;
                2.0 * (2.0 * PI * 3.0 * x).cos() + (2.0 * PI * 7.0 * x).sin()
            })
            .collect()
    }

    #[test]
    fn two_tone_picks_stronger_bin() {
        let spec = dft_coefficients(&two_tone(64)).unwrap();
        for rule in [RankingRule::MeanEnergy, RankingRule::MeanAmplitude] {
            let sel = select_frequencies(&[vec![spec.clone()]], 64, 1, rule).unwrap();
            assert_eq!(sel.bins, vec![vec![3]]);
            let sel = select_frequencies(&[vec![spec.clone()]], 64, 2, rule).unwrap();
            assert_eq!(sel.bins, vec![vec![3, 7]]);
        }
    }

    #[test]
    fn ties_prefer_lower_bin() {
        let spec = dft_coefficients(&[0.0; 16]).unwrap();
        let sel = select_frequencies(&[vec![spec]], 16, 9, RankingRule::MeanEnergy).unwrap();
        assert_eq!(sel.bins[0], (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn rules_disagree_on_spread_energy() {
        // bin 1: amplitudes (2, 0); bin 2: (1.1, 1.1)
        let t = 16;
        let tone = |j: f64, a: f64| -> Vec<f64> { (0..t).map(|i| a * (2.0 * PI * j * i as f64 / t as f64).cos()).collect() };
        let add = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(x, y)| x + y).collect::<Vec<_>>();
        let s1 = dft_coefficients(&add(tone(1.0, 2.0), tone(2.0, 1.1))).unwrap();
        let s2 = dft_coefficients(&tone(2.0, 1.1)).unwrap();
        let samples = vec![vec![s1], vec![s2]];
        let e = select_frequencies(&samples, t, 1, RankingRule::MeanEnergy).unwrap();
        let a = select_frequencies(&samples, t, 1, RankingRule::MeanAmplitude).unwrap();
        assert_eq!(e.bins[0], vec![1]);
        assert_eq!(a.bins[0], vec![2]);
    }

    #[test]
    fn errors() {
        let spec = dft_coefficients(&[1.0; 8]).unwrap();
        assert!(select_frequencies(&[vec![spec.clone()]], 8, 6, RankingRule::MeanEnergy).is_err());
        assert!(select_frequencies(&[], 8, 1, RankingRule::MeanEnergy).is_err());
        let sel = select_frequencies(&[vec![spec]], 8, 4, RankingRule::MeanEnergy).unwrap();
        assert_eq!(sel.truncate(2).unwrap().bins[0], sel.bins[0][..2].to_vec());
        assert!(sel.truncate(5).is_err());
    }
}
