use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{great_circle_km, parse_dms_pair};
use crate::grid::{GridSpec, Raster};
use crate::spectral::climate_distance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalogParams {
    /// `None`: the 10th percentile of the candidate's distance map.
    pub max_climate_dist: Option<f64>,
    pub min_ndvi_margin: f64,
}

impl Default for AnalogParams {
    fn default() -> Self {
        AnalogParams {
            max_climate_dist: None,
            min_ndvi_margin: 0.02,
        }
    }
}

pub const DEFAULT_DISTANCE_PERCENTILE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogMatch {
    pub candidate_pixel: usize,
    pub candidate_lat: f64,
    pub candidate_lon: f64,
    pub analog_pixel: usize,
    pub analog_lat: f64,
    pub analog_lon: f64,
    pub climate_distance: f64,
    pub spatial_km: f64,
    pub candidate_ndvi: f64,
    pub analog_ndvi: f64,
    /// `analog_ndvi / candidate_ndvi`; NaN when the candidate NDVI is not positive.
    pub uplift: f64,
}

/// The filter stage that left no eligible pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingConstraint {
    /// No other pixel with climate and NDVI data.
    NoData,
    ExclusionMask,
    ClimateDistance,
    NdviMargin,
}

impl fmt::Display for BindingConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BindingConstraint::NoData => "no other pixel has climate and NDVI data",
            BindingConstraint::ExclusionMask => "every remaining pixel is excluded",
            BindingConstraint::ClimateDistance => "no pixel within the climate distance limit",
            BindingConstraint::NdviMargin => "no climatically close pixel is greener by the NDVI margin",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AnalogOutcome {
    Found(AnalogMatch),
    NoAnalog {
        candidate_pixel: usize,
        constraint: BindingConstraint,
        max_climate_dist: f64,
    },
}

/// Linear-interpolation percentile (`q` in 0..=100) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Greenest climatically close pixel for one candidate.
///
/// `vectors` holds one distance vector per pixel (`None` when masked). The
/// candidate itself and pixels where `exclusion` is non-zero are never chosen.
/// Ties: smaller climate distance, then smaller `(lat, lon)`.
pub fn find_analog(
    candidate: usize,
    grid: &GridSpec,
    vectors: &[Option<Vec<f64>>],
    ndvi: &Raster,
    exclusion: Option<&Raster>,
    params: &AnalogParams,
) -> Result<AnalogOutcome> {
    grid.ensure_aligned(&ndvi.spec, "summer NDVI")?;
    if let Some(m) = exclusion {
        grid.ensure_aligned(&m.spec, "exclusion mask")?;
    }
    if vectors.len() != grid.n_pixels() || candidate >= grid.n_pixels() {
        return Err(Error::DimensionMismatch("distance vectors do not cover the grid".into()));
    }
    let (ci, cj) = grid.unindex(candidate);
    let cvec = vectors[candidate]
        .as_ref()
        .ok_or(Error::MaskedPixel { lat_idx: ci, lon_idx: cj })?;
    let cndvi = ndvi.values[candidate] as f64;
    if cndvi.is_nan() {
        return Err(Error::MaskedPixel { lat_idx: ci, lon_idx: cj });
    }
    let mut pool: Vec<(usize, f64)> = Vec::new();
    for (p, v) in vectors.iter().enumerate() {
        if p == candidate || ndvi.values[p].is_nan() {
            continue;
        }
        if let Some(v) = v {
            pool.push((p, climate_distance(cvec, v)?));
        }
    }
    let limit = match params.max_climate_dist {
        Some(d) => d,
        None => percentile(&pool.iter().map(|x| x.1).collect::<Vec<_>>(), DEFAULT_DISTANCE_PERCENTILE).unwrap_or(0.0),
    };
    let none = |constraint| {
        Ok(AnalogOutcome::NoAnalog {
            candidate_pixel: candidate,
            constraint,
            max_climate_dist: limit,
        })
    };
    if pool.is_empty() {
        return none(BindingConstraint::NoData);
    }
    if let Some(m) = exclusion {
        pool.retain(|(p, _)| m.values[*p] == 0.0 || m.values[*p].is_nan());
        if pool.is_empty() {
            return none(BindingConstraint::ExclusionMask);
        }
    }
    pool.retain(|(_, d)| *d <= limit);
    if pool.is_empty() {
        return none(BindingConstraint::ClimateDistance);
    }
    pool.retain(|(p, _)| ndvi.values[*p] as f64 >= cndvi + params.min_ndvi_margin);
    let best = pool.into_iter().min_by(|a, b| {
        let (la, oa) = grid.coords(a.0);
        let (lb, ob) = grid.coords(b.0);
        ndvi.values[b.0]
            .total_cmp(&ndvi.values[a.0])
            .then(a.1.total_cmp(&b.1))
            .then(la.total_cmp(&lb))
            .then(oa.total_cmp(&ob))
    });
    let Some((p, d)) = best else {
        return none(BindingConstraint::NdviMargin);
    };
    let (clat, clon) = grid.coords(candidate);
    let (alat, alon) = grid.coords(p);
    let andvi = ndvi.values[p] as f64;
    Ok(AnalogOutcome::Found(AnalogMatch {
        candidate_pixel: candidate,
        candidate_lat: clat,
        candidate_lon: clon,
        analog_pixel: p,
        analog_lat: alat,
        analog_lon: alon,
        climate_distance: d,
        spatial_km: great_circle_km(clat, clon, alat, alon),
        candidate_ndvi: cndvi,
        analog_ndvi: andvi,
        uplift: if cndvi > 0.0 { andvi / cndvi } else { f64::NAN },
    }))
}

/// [`find_analog`] for several candidates in parallel, results in input order.
pub fn find_analogs(
    candidates: &[usize],
    grid: &GridSpec,
    vectors: &[Option<Vec<f64>>],
    ndvi: &Raster,
    exclusion: Option<&Raster>,
    params: &AnalogParams,
) -> Result<Vec<AnalogOutcome>> {
    candidates
        .par_iter()
        .map(|c| find_analog(*c, grid, vectors, ndvi, exclusion, params))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftReport {
    /// Per input pair; `None` where the candidate NDVI is not positive.
    pub ratios: Vec<Option<f64>>,
    /// Indices of pairs left out of both summaries.
    pub excluded: Vec<usize>,
    /// Mean over sites of `analog / candidate`.
    pub mean_of_ratios: f64,
    /// `mean(analog) / mean(candidate)` over the same sites.
    pub ratio_of_means: f64,
}

/// Summarizes `(candidate_ndvi, analog_ndvi)` pairs both ways.
pub fn uplift_report(pairs: &[(f64, f64)]) -> Result<UpliftReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("uplift report needs at least one match".into()));
    }
    let mut ratios = Vec::with_capacity(pairs.len());
    let mut excluded = Vec::new();
    let (mut sum_c, mut sum_a, mut sum_r, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (i, &(c, a)) in pairs.iter().enumerate() {
        if c > 0.0 && a.is_finite() {
            ratios.push(Some(a / c));
            sum_c += c;
            sum_a += a;
            sum_r += a / c;
            n += 1;
        } else {
            log::warn!("pair {i}: candidate NDVI {c} is not positive; left out of the uplift summary");
            ratios.push(None);
            excluded.push(i);
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("no pair has a positive candidate NDVI".into()));
    }
    Ok(UpliftReport {
        ratios,
        excluded,
        mean_of_ratios: sum_r / n as f64,
        ratio_of_means: sum_a / sum_c,
    })
}

/// One row of a published match table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub site: usize,
    pub candidate: (f64, f64),
    pub analog: (f64, f64),
    pub candidate_ndvi: f64,
    pub analog_ndvi: f64,
    pub climate_distance: f64,
    pub spatial_km: f64,
}

/// Reads a match table with columns: number, selected location (DMS), analog
/// location (DMS), candidate NDVI, analog NDVI, climate distance, spatial km.
pub fn read_match_table(path: &Path) -> Result<Vec<MatchRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |what: &str| Error::Metadata(format!("{}: row {}: bad {what}", path.display(), line + 2));
        if rec.len() < 7 {
            return Err(bad("column count"));
        }
        let num = |i: usize, what: &str| rec[i].trim().parse::<f64>().map_err(|_| bad(what));
        out.push(MatchRecord {
            site: rec[0].trim().parse().map_err(|_| bad("site number"))?,
            candidate: parse_dms_pair(&rec[1])?,
            analog: parse_dms_pair(&rec[2])?,
            candidate_ndvi: num(3, "candidate NDVI")?,
            analog_ndvi: num(4, "analog NDVI")?,
            climate_distance: num(5, "climate distance")?,
            spatial_km: num(6, "spatial distance")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (GridSpec, Vec<Option<Vec<f64>>>, Raster) {
        let g = GridSpec::with_step(20.0, 40.0, 0.1, 3, 3).unwrap();
        let vectors: Vec<Option<Vec<f64>>> = (0..9).map(|p| Some(vec![p as f64, 0.0])).collect();
        let ndvi = Raster::new(g, vec![0.05, 0.06, 0.3, 0.02, 0.04, 0.05, 0.2, 0.01, 0.03]).unwrap();
        (g, vectors, ndvi)
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0, 4.0, 5.0], 50.0), Some(3.0));
        assert!((percentile(&[0.0, 10.0], 10.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(percentile(&[], 10.0), None);
    }

    #[test]
    fn self_never_chosen() {
        let (g, mut v, ndvi) = setup();
        v.iter_mut().for_each(|x| *x = Some(vec![0.0]));
        let p = AnalogParams {
            max_climate_dist: Some(0.0),
            min_ndvi_margin: 0.0,
        };
        // The greenest pixel has no greener peer, and never matches itself.
        assert!(matches!(
            find_analog(2, &g, &v, &ndvi, None, &p).unwrap(),
            AnalogOutcome::NoAnalog {
                constraint: BindingConstraint::NdviMargin,
                ..
            }
        ));
        match find_analog(6, &g, &v, &ndvi, None, &p).unwrap() {
            AnalogOutcome::Found(m) => {
                assert_eq!(m.analog_pixel, 2);
                assert_eq!(m.climate_distance, 0.0);
                assert!((m.uplift - 1.5).abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binding_constraints_named() {
        let (g, v, ndvi) = setup();
        let tight = AnalogParams {
            max_climate_dist: Some(0.5),
            min_ndvi_margin: 0.02,
        };
        assert!(matches!(
            find_analog(4, &g, &v, &ndvi, None, &tight).unwrap(),
            AnalogOutcome::NoAnalog {
                constraint: BindingConstraint::ClimateDistance,
                ..
            }
        ));
        let wide = AnalogParams {
            max_climate_dist: Some(1.5),
            min_ndvi_margin: 0.5,
        };
        assert!(matches!(
            find_analog(4, &g, &v, &ndvi, None, &wide).unwrap(),
            AnalogOutcome::NoAnalog {
                constraint: BindingConstraint::NdviMargin,
                ..
            }
        ));
        let all = Raster::filled(g, 1.0);
        assert!(matches!(
            find_analog(4, &g, &v, &ndvi, Some(&all), &wide).unwrap(),
            AnalogOutcome::NoAnalog {
                constraint: BindingConstraint::ExclusionMask,
                ..
            }
        ));
    }

    #[test]
    fn single_pair_uplift() {
        let r = uplift_report(&[(0.05, 0.10)]).unwrap();
        assert!((r.mean_of_ratios - 2.0).abs() < 1e-12 && (r.ratio_of_means - 2.0).abs() < 1e-12);
        let r = uplift_report(&[(0.0, 0.1), (0.1, 0.3)]).unwrap();
        assert_eq!(r.excluded, vec![0]);
        assert!((r.mean_of_ratios - 3.0).abs() < 1e-12);
        assert!(uplift_report(&[]).is_err());
    }
}
