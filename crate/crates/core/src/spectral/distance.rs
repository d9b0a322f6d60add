use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::features::FeatureSpace;
use crate::error::{Error, Result};

/// Bins per variable entering the climate distance.
pub const DISTANCE_CHANNELS: usize = 32;

/// Which coefficients make up the vectors compared by [`climate_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Raw coefficients of the lowest-frequency bins `0..channels` of every variable.
    #[default]
    LowestRaw,
    /// Standardized coefficients of the first `channels` ranked bins (model features).
    RankedNormalized,
}

/// Builds the vector compared by [`climate_distance`] from one location's spectra.
pub fn distance_vector(
    spectra: &[Vec<Complex64>],
    mode: DistanceMode,
    channels: usize,
    space: Option<&FeatureSpace>,
) -> Result<Vec<f64>> {
    match mode {
        DistanceMode::LowestRaw => {
            let mut out = Vec::with_capacity(spectra.len() * channels * 2);
            for s in spectra {
                if s.len() < channels {
                    return Err(Error::InvalidInput(format!(
                        "spectrum has {} bins, distance needs {channels}",
                        s.len()
                    )));
                }
                for c in &s[..channels] {
                    out.push(c.re);
                    out.push(c.im);
                }
            }
            Ok(out)
        }
        DistanceMode::RankedNormalized => {
            let space = space.ok_or_else(|| Error::InvalidInput("ranked distance needs a fitted feature space".into()))?;
            space.featurize_spectra(spectra, channels.min(space.k_max()))
        }
    }
}

/// Euclidean distance between two distance vectors.
pub fn climate_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "distance vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pythagorean() {
        assert_eq!(climate_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(climate_distance(&[0.0, 3.0, 1.0], &[4.0, 0.0, 1.0]).unwrap(), 5.0);
        assert!(climate_distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn lowest_raw_layout() {
        let s = vec![
            vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 3.0), Complex64::new(9.0, 9.0)],
            vec![Complex64::new(4.0, 0.0), Complex64::new(5.0, 6.0), Complex64::new(9.0, 9.0)],
        ];
        let v = distance_vector(&s, DistanceMode::LowestRaw, 2, None).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 2.0, 3.0, 4.0, 0.0, 5.0, 6.0]);
        assert!(distance_vector(&s, DistanceMode::LowestRaw, 4, None).is_err());
        assert!(distance_vector(&s, DistanceMode::RankedNormalized, 2, None).is_err());
    }
}
