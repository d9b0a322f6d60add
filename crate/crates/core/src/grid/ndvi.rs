use super::{GridSpec, NdviRaster, Raster};
use crate::error::{Error, Result};

/// First day of year counted as summer (inclusive).
pub const SUMMER_DOY_START: u16 = 80;
/// Last day of year counted as summer (inclusive).
pub const SUMMER_DOY_END: u16 = 256;

/// Per-pixel mean of all observations with day of year in `[80, 256]` in `years`.
///
/// A pixel that is no-data in any qualifying observation is no-data in the result.
pub fn summer_ndvi_mean(raster: &NdviRaster, years: &[i32]) -> Result<Raster> {
    summer_ndvi_mean_window(raster, years, SUMMER_DOY_START, SUMMER_DOY_END)
}

pub fn summer_ndvi_mean_window(raster: &NdviRaster, years: &[i32], doy_start: u16, doy_end: u16) -> Result<Raster> {
    if years.is_empty() {
        return Err(Error::InvalidInput("no years requested for the summer mean".into()));
    }
    let mut picked: Vec<_> = raster
        .observations()
        .iter()
        .filter(|o| years.contains(&o.year) && (doy_start..=doy_end).contains(&o.doy))
        .collect();
    let mut missing: Vec<i32> = years
        .iter()
        .copied()
        .filter(|y| !picked.iter().any(|o| o.year == *y))
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(Error::NoCoverage(missing));
    }
    // canonical accumulation order
    picked.sort_by_key(|o| (o.year, o.doy));

    let spec = *raster.spec();
    let mut sum = vec![0.0f64; spec.n_pixels()];
    for obs in &picked {
        for (s, v) in sum.iter_mut().zip(&obs.values) {
            *s += *v as f64;
        }
    }
    let n = picked.len() as f64;
    let values = sum.into_iter().map(|s| (s / n) as f32).collect();
    Raster::new(spec, values)
}

/// Block-averages a grid onto a coarser (or equal) target grid.
///
/// Each target cell is the mean of the valid source nodes falling in its Voronoi
/// cell; cells without valid contributors are no-data. Source nodes exactly
/// halfway between two target nodes go to the higher index.
pub fn regrid_ndvi(source: &Raster, target: &GridSpec) -> Result<Raster> {
    target.validate()?;
    let src = source.spec;
    let overlap_lat = src.lat_min.max(target.lat_min - target.lat_step() / 2.0)
        <= src.lat_max.min(target.lat_max + target.lat_step() / 2.0);
    let overlap_lon = src.lon_min.max(target.lon_min - target.lon_step() / 2.0)
        <= src.lon_max.min(target.lon_max + target.lon_step() / 2.0);
    if !overlap_lat || !overlap_lon {
        return Err(Error::InvalidInput("source and target grids do not overlap".into()));
    }
    let tol = 1e-9;
    if target.lat_step() + tol < src.lat_step() || target.lon_step() + tol < src.lon_step() {
        return Err(Error::InvalidInput(format!(
            "target grid ({:.4}°) is finer than the source grid ({:.4}°)",
            target.lat_step().min(target.lon_step()),
            src.lat_step().min(src.lon_step())
        )));
    }

    let mut sum = vec![0.0f64; target.n_pixels()];
    let mut count = vec![0u32; target.n_pixels()];
    for i in 0..src.n_lat {
        let lat = src.lat(i);
        for j in 0..src.n_lon {
            let v = source.values[src.index(i, j)];
            if v.is_nan() {
                continue;
            }
            if let Some((ti, tj)) = target.cell_of(lat, src.lon(j)) {
                let t = target.index(ti, tj);
                sum[t] += v as f64;
                count[t] += 1;
            }
        }
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(s, c)| if *c == 0 { f32::NAN } else { (s / *c as f64) as f32 })
        .collect();
    Raster::new(*target, values)
}
