use serde::{Deserialize, Serialize};

use super::rules::SiteAttributes;
use crate::error::{Error, Result};
use crate::geo::great_circle_km;
use crate::grid::Raster;
use crate::pipeline::calibration::Calibration;

/// `(slope * css + intercept) - ndvi` on pixels valid in both maps, NaN elsewhere.
///
/// Positive values mark climate potential the vegetation does not realize.
pub fn opportunity_map(css: &Raster, ndvi: &Raster, cal: &Calibration) -> Result<Raster> {
    css.spec.ensure_aligned(&ndvi.spec, "summer NDVI")?;
    let values = css
        .values
        .iter()
        .zip(&ndvi.values)
        .map(|(c, v)| {
            if c.is_nan() || v.is_nan() {
                f32::NAN
            } else {
                (cal.apply(*c as f64) - *v as f64) as f32
            }
        })
        .collect();
    Raster::new(css.spec, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSite {
    /// 1-based, in decreasing opportunity.
    pub rank: usize,
    pub pixel: usize,
    pub lat: f64,
    pub lon: f64,
    pub css: f64,
    pub ndvi: f64,
    pub opportunity: f64,
    /// `None` until joined, and for sites without a matching table row.
    pub attributes: Option<SiteAttributes>,
    /// `None` until filtered, and for sites the rules could not be evaluated on.
    pub retained: Option<bool>,
}

/// Greedy non-maximum suppression over positive opportunity pixels.
///
/// Pixels are visited by decreasing value, ties by `(lat, lon)` ascending; a pixel
/// is kept unless it lies closer than `min_spacing_km` to a kept pixel.
pub fn extract_candidates(
    opportunity: &Raster,
    css: &Raster,
    ndvi: &Raster,
    count: usize,
    min_spacing_km: f64,
) -> Result<Vec<CandidateSite>> {
    let spec = opportunity.spec;
    spec.ensure_aligned(&css.spec, "CSS map")?;
    spec.ensure_aligned(&ndvi.spec, "summer NDVI")?;
    if !(min_spacing_km >= 0.0) {
        return Err(Error::InvalidInput(format!("minimum spacing {min_spacing_km} km is negative")));
    }
    let mut order: Vec<usize> = (0..spec.n_pixels())
        .filter(|p| opportunity.values[*p] > 0.0)
        .collect();
    order.sort_by(|a, b| {
        let (la, oa) = spec.coords(*a);
        let (lb, ob) = spec.coords(*b);
        opportunity.values[*b]
            .total_cmp(&opportunity.values[*a])
            .then(la.total_cmp(&lb))
            .then(oa.total_cmp(&ob))
    });
    let mut kept: Vec<CandidateSite> = Vec::with_capacity(count);
    for p in order {
        if kept.len() == count {
            break;
        }
        let (lat, lon) = spec.coords(p);
        if kept.iter().any(|k| great_circle_km(lat, lon, k.lat, k.lon) < min_spacing_km) {
            continue;
        }
        kept.push(CandidateSite {
            rank: kept.len() + 1,
            pixel: p,
            lat,
            lon,
            css: css.values[p] as f64,
            ndvi: ndvi.values[p] as f64,
            opportunity: opportunity.values[p] as f64,
            attributes: None,
            retained: None,
        });
    }
    if kept.len() < count {
        log::warn!("only {} of {count} candidates could be placed", kept.len());
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn spec() -> GridSpec {
        GridSpec::with_step(20.0, 40.0, 0.03, 8, 8).unwrap()
    }

    #[test]
    fn calibrated_difference() {
        let s = GridSpec::with_step(0.0, 0.0, 1.0, 2, 2).unwrap();
        let css = Raster::new(s, vec![0.5, 0.0, 1.0, f32::NAN]).unwrap();
        let ndvi = Raster::new(s, vec![0.2, 0.4, 0.0, 0.1]).unwrap();
        let cal = Calibration {
            slope: 0.3,
            intercept: 0.05,
            r2: 1.0,
            n: 2,
        };
        let d = opportunity_map(&css, &ndvi, &cal).unwrap();
        assert!(d.values[0].abs() < 1e-7);
        assert!(d.values[1] < -0.3);
        assert!((d.values[2] - 0.35).abs() < 1e-7);
        assert!(d.values[3].is_nan());
    }

    #[test]
    fn nearby_peak_suppressed() {
        // 0.03 degrees is about 3.3 km, so peaks two nodes apart (~6.7 km) clash at 9 km.
        let mut v = vec![0.0f32; 64];
        v[spec().index(3, 3)] = 1.0;
        v[spec().index(3, 5)] = 1.0;
        let opp = Raster::new(spec(), v).unwrap();
        let flat = Raster::filled(spec(), 0.5);
        let c = extract_candidates(&opp, &flat, &flat, 5, 9.0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].pixel, spec().index(3, 3));
    }

    #[test]
    fn non_positive_pixels_never_selected() {
        let opp = Raster::filled(spec(), -0.1);
        let flat = Raster::filled(spec(), 0.5);
        assert!(extract_candidates(&opp, &flat, &flat, 3, 0.0).unwrap().is_empty());
    }
}
