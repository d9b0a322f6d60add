//! Feature extraction at sample locations and pixelwise map prediction.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::ensemble::Ensemble;
use super::samples::LabeledSample;
use crate::error::{Error, Result};
use crate::grid::{ClimateCube, Raster};
use crate::linalg::Matrix;
use crate::spectral::{distance_vector, Dft, DistanceMode, FeatureSpace, RankingRule};

/// Pixels scored together by one worker.
pub const PIXEL_CHUNK: usize = 64;

/// Cube variable index for each name, in the given order.
pub fn variable_order(cube: &ClimateCube, variables: &[String]) -> Result<Vec<usize>> {
    variables
        .iter()
        .map(|v| cube.variable_index(v).ok_or_else(|| Error::MissingVariable(v.clone())))
        .collect()
}

fn series_at(cube: &ClimateCube, order: &[usize], pixel: usize) -> Vec<Vec<f64>> {
    order.iter().map(|&v| cube.pixel_series(v, pixel)).collect()
}

/// Series `[sample][variable][t]` at the grid node nearest each sample.
pub fn sample_series(cube: &ClimateCube, variables: &[String], samples: &[LabeledSample]) -> Result<Vec<Vec<Vec<f64>>>> {
    let order = variable_order(cube, variables)?;
    samples
        .iter()
        .map(|s| {
            let (i, j) = cube.spec().nearest(s.lat, s.lon)?;
            let pixel = cube.spec().index(i, j);
            if !cube.is_valid(pixel) {
                return Err(Error::MaskedPixel { lat_idx: i, lon_idx: j });
            }
            Ok(series_at(cube, &order, pixel))
        })
        .collect()
}

/// Fits the feature space on the series at every sample location.
pub fn fit_feature_space(
    cube: &ClimateCube,
    variables: &[String],
    samples: &[LabeledSample],
    k_max: usize,
    rule: RankingRule,
) -> Result<FeatureSpace> {
    FeatureSpace::fit(variables, &sample_series(cube, variables, samples)?, k_max, rule)
}

/// One `k_max` feature row per sample.
pub fn sample_features(cube: &ClimateCube, space: &FeatureSpace, samples: &[LabeledSample]) -> Result<Matrix> {
    let dft = Dft::new(space.n_steps())?;
    let rows = sample_series(cube, &space.variables, samples)?
        .iter()
        .map(|s| space.featurize(&dft, s, space.k_max()))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, space.dim(space.k_max())));
    }
    Matrix::from_rows(&rows)
}

/// Applies `f` to chunks of valid pixels' spectra (variables in `variables` order).
///
/// Chunks are processed in parallel and results returned in pixel order, as
/// `(pixel, value)` pairs. Each worker holds only its chunk's spectra.
pub fn map_pixel_chunks<T, F>(cube: &ClimateCube, variables: &[String], chunk: usize, f: F) -> Result<Vec<(usize, T)>>
where
    T: Send,
    F: Fn(&[Vec<Vec<Complex64>>]) -> Result<Vec<T>> + Sync,
{
    let order = variable_order(cube, variables)?;
    let dft = Dft::new(cube.time().n_steps)?;
    let pixels: Vec<usize> = (0..cube.spec().n_pixels()).filter(|p| cube.is_valid(*p)).collect();
    let parts = pixels
        .par_chunks(chunk.max(1))
        .map(|ps| {
            let spectra = ps
                .iter()
                .map(|&p| series_at(cube, &order, p).iter().map(|s| dft.coefficients(s)).collect())
                .collect::<Result<Vec<Vec<Vec<Complex64>>>>>()?;
            let values = f(&spectra)?;
            if values.len() != ps.len() {
                return Err(Error::DimensionMismatch("chunk function returned the wrong number of values".into()));
            }
            Ok(ps.iter().copied().zip(values).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Score maps of one ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct CssMaps {
    pub blup: Option<Raster>,
    pub nn: Option<Raster>,
    /// Unweighted mean over every model.
    pub combined: Raster,
    /// Ids of the contributing models.
    pub provenance: Vec<String>,
}

/// Scores every valid pixel with every model; masked pixels are NaN.
pub fn predict_map(ensemble: &Ensemble, space: &FeatureSpace, cube: &ClimateCube) -> Result<CssMaps> {
    ensemble.check_lineage(space)?;
    if ensemble.variables != space.variables {
        return Err(Error::Metadata("ensemble and feature space list different variables".into()));
    }
    if cube.time().n_steps != space.n_steps() {
        return Err(Error::DimensionMismatch(format!(
            "cube has {} time steps, features were fitted on {}",
            cube.time().n_steps,
            space.n_steps()
        )));
    }
    let k = space.k_max();
    let scored = map_pixel_chunks(cube, &space.variables, PIXEL_CHUNK, |spectra| {
        let rows = spectra
            .iter()
            .map(|s| space.featurize_spectra(s, k))
            .collect::<Result<Vec<_>>>()?;
        let s = ensemble.score(space, &Matrix::from_rows(&rows)?)?;
        Ok((0..rows.len()).map(|i| [s.blup[i], s.nn[i], s.combined[i]]).collect())
    })?;
    let spec = *cube.spec();
    let mut out = [vec![f32::NAN; spec.n_pixels()], vec![f32::NAN; spec.n_pixels()], vec![f32::NAN; spec.n_pixels()]];
    for (p, v) in scored {
        for (dst, x) in out.iter_mut().zip(v) {
            dst[p] = x as f32;
        }
    }
    let [b, n, c] = out;
    Ok(CssMaps {
        blup: (!ensemble.blup.is_empty()).then(|| Raster::new(spec, b)).transpose()?,
        nn: (!ensemble.nn.is_empty()).then(|| Raster::new(spec, n)).transpose()?,
        combined: Raster::new(spec, c)?,
        provenance: ensemble.model_ids(),
    })
}

/// Distance vectors of every valid pixel, `None` on masked pixels.
pub fn distance_vectors(
    cube: &ClimateCube,
    variables: &[String],
    mode: DistanceMode,
    channels: usize,
    space: Option<&FeatureSpace>,
) -> Result<Vec<Option<Vec<f64>>>> {
    let mut out = vec![None; cube.spec().n_pixels()];
    for (p, v) in map_pixel_chunks(cube, variables, PIXEL_CHUNK, |spectra| {
        spectra.iter().map(|s| distance_vector(s, mode, channels, space)).collect()
    })? {
        out[p] = Some(v);
    }
    Ok(out)
}
