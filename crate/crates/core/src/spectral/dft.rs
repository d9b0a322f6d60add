use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Number of one-sided bins (`0..=T/2`) of a length-`n_steps` series.
pub fn n_bins(n_steps: usize) -> usize {
    n_steps / 2 + 1
}

/// Multiplicity of bin `j` in the two-sided spectrum: 1 for DC and Nyquist, 2 otherwise.
pub fn bin_weight(j: usize, n_steps: usize) -> f64 {
    if j == 0 || (n_steps % 2 == 0 && j == n_steps / 2) {
        1.0
    } else {
        2.0
    }
}

/// Amplitude of a one-sided coefficient: its modulus, doubled for paired bins.
pub fn amplitude(c: Complex64, j: usize, n_steps: usize) -> f64 {
    bin_weight(j, n_steps) * c.norm()
}

/// Reusable forward transform for series of one fixed length.
#[derive(Clone)]
pub struct Dft {
    n_steps: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("n_steps", &self.n_steps).finish()
    }
}

impl Dft {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidInput(format!("series length {n_steps} is below 2")));
        }
        let fft = FftPlanner::new().plan_fft_forward(n_steps);
        Ok(Dft { n_steps, fft })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// One-sided coefficients `X_j = (1/T) sum_t x_t e^{-2 pi i j t / T}`, `j = 0..=T/2`.
    ///
    /// DC and Nyquist coefficients are exactly real.
    pub fn coefficients(&self, series: &[f64]) -> Result<Vec<Complex64>> {
        if series.len() != self.n_steps {
            return Err(Error::DimensionMismatch(format!(
                "series has {} steps, transform expects {}",
                series.len(),
                self.n_steps
            )));
        }
        if let Some(t) = series.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at step {t}")));
        }
        let mut buf: Vec<Complex64> = series.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        self.fft.process(&mut buf);
        let scale = 1.0 / self.n_steps as f64;
        let nb = n_bins(self.n_steps);
        buf.truncate(nb);
        for c in &mut buf {
            *c *= scale;
        }
        buf[0].im = 0.0;
        if self.n_steps % 2 == 0 {
            buf[nb - 1].im = 0.0;
        }
        Ok(buf)
    }
}

/// One-shot transform; see [`Dft::coefficients`].
pub fn dft_coefficients(series: &[f64]) -> Result<Vec<Complex64>> {
    Dft::new(series.len())?.coefficients(series)
}

/// Time-domain series rebuilt from a subset of one-sided bins.
pub fn reconstruct(coeffs: &[Complex64], bins: &[usize], n_steps: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_steps];
    for &j in bins {
        let c = coeffs[j];
        let w = bin_weight(j, n_steps);
        for (t, x) in out.iter_mut().enumerate() {
            let phase = 2.0 * std::f64::consts::PI * ((j * t) % n_steps) as f64 / n_steps as f64;
            *x += w * (c.re * phase.cos() - c.im * phase.sin());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_series() {
        let c = dft_coefficients(&[3.5; 10]).unwrap();
        assert_eq!(c.len(), 6);
        assert!((c[0].re - 3.5).abs() < 1e-12);
        assert!(c[1..].iter().all(|z| z.norm() < 1e-12 * 3.5));
    }

    #[test]
    fn pure_tone() {
        let t = 64;
        let s: Vec<f64> = (0..t).map(|i| (2.0 * PI * 5.0 * i as f64 / t as f64).sin()).collect();
        let c = dft_coefficients(&s).unwrap();
        for (j, z) in c.iter().enumerate() {
            let a = amplitude(*z, j, t);
            if j == 5 {
                assert!((a - 1.0).abs() < 1e-9);
            } else {
                assert!(a < 1e-9);
            }
        }
    }

    #[test]
    fn full_reconstruction() {
        for t in [7usize, 8] {
            let s: Vec<f64> = (0..t).map(|i| ((i * 37 % 11) as f64).sin()).collect();
            let c = dft_coefficients(&s).unwrap();
            let all: Vec<usize> = (0..c.len()).collect();
            let r = reconstruct(&c, &all, t);
            for (a, b) in s.iter().zip(&r) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(dft_coefficients(&[1.0]).is_err());
        assert!(dft_coefficients(&[1.0, f64::NAN]).is_err());
        assert!(Dft::new(4).unwrap().coefficients(&[1.0; 5]).is_err());
    }
}
