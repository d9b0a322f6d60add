//! Linear map from suitability scores to NDVI units.

use serde::{Deserialize, Serialize};

use super::samples::Category;
use crate::error::{Error, Result};

/// `ndvi ≈ slope * score + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub slope: f64,
    pub intercept: f64,
    /// `1 - SSE/SST`; 1 when the NDVI values are all equal.
    pub r2: f64,
    pub n: usize,
}

impl Calibration {
    pub fn apply(&self, score: f64) -> f64 {
        self.slope * score + self.intercept
    }
}

/// Ordinary least squares of NDVI on score over the two main categories only.
pub fn fit_calibration(scores: &[f64], ndvi: &[f64], categories: &[Category]) -> Result<Calibration> {
    if scores.len() != ndvi.len() || scores.len() != categories.len() {
        return Err(Error::DimensionMismatch("scores, NDVI and categories differ in length".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = scores
        .iter()
        .zip(ndvi)
        .zip(categories)
        .filter(|(_, c)| c.is_main())
        .map(|((s, v), _)| (*s, *v))
        .unzip();
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("calibration needs 2 main-category samples, got {n}")));
    }
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite score or NDVI in calibration".into()));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("calibration scores"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(Calibration {
        slope,
        intercept,
        r2,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let s = [0.0, 0.25, 0.5, 1.0];
        let v: Vec<f64> = s.iter().map(|x| 0.3 * x + 0.05).collect();
        let c = fit_calibration(&s, &v, &[Category::HiSuitHiVeg; 4]).unwrap();
        assert!((c.slope - 0.3).abs() < 1e-12 && (c.intercept - 0.05).abs() < 1e-12);
        assert!((c.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auxiliary_rows_ignored() {
        let cats = [
            Category::HiSuitHiVeg,
            Category::LoSuitLoVeg,
            Category::LoSuitHiVeg,
            Category::HiSuitLoVeg,
            Category::LoSuitLoVeg,
        ];
        let s = [0.9, 0.1, 0.2, 0.8, 0.3];
        let v = [0.3, 0.05, 0.6, 0.01, 0.1];
        let with = fit_calibration(&s, &v, &cats).unwrap();
        let keep = [0, 1, 4];
        let without = fit_calibration(
            &keep.map(|i| s[i]),
            &keep.map(|i| v[i]),
            &keep.map(|i| cats[i]),
        )
        .unwrap();
        assert_eq!(with, without);
        assert_eq!(with.n, 3);
    }

    #[test]
    fn degenerate_scores() {
        assert!(fit_calibration(&[0.5, 0.5], &[0.1, 0.2], &[Category::HiSuitHiVeg; 2]).is_err());
        assert!(fit_calibration(&[0.5, 0.6], &[0.1, 0.2], &[Category::HiSuitLoVeg; 2]).is_err());
    }
}
