//! Regular lat/lon grids, climate cubes and NDVI rasters.
//!
//! Grids are node-centered: node `(i, j)` sits at
//! `(lat_min + i * lat_step, lon_min + j * lon_step)`. Every per-pixel array in
//! this crate is stored `[lat, lon]` row-major with row 0 at `lat_min`.

mod io;
mod ndvi;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_cube, load_ndvi, load_raster, save_cube, save_ndvi, save_raster, RasterMeta, CUBE_FORMAT,
    NDVI_FORMAT, RASTER_FORMAT,
};
pub use ndvi::{regrid_ndvi, summer_ndvi_mean, SUMMER_DOY_END, SUMMER_DOY_START};

/// Tolerance (degrees) for bounds and alignment checks.
const COORD_EPS: f64 = 1e-9;

/// The 23 reanalysis variables used as model inputs, with their units.
pub const DEFAULT_VARIABLES: [(&str, &str); 23] = [
    ("d2m", "K"),
    ("evabs", "m of water equivalent"),
    ("evaow", "m of water equivalent"),
    ("evatc", "m of water equivalent"),
    ("evavt", "m of water equivalent"),
    ("sp", "Pa"),
    ("src", "m of water equivalent"),
    ("sro", "kg/m2"),
    ("ssrd", "J/m2"),
    ("ssro", "m"),
    ("stl1", "K"),
    ("stl2", "K"),
    ("stl3", "K"),
    ("stl4", "K"),
    ("strd", "J/m2"),
    ("swvl1", "m3/m3"),
    ("swvl2", "m3/m3"),
    ("swvl3", "m3/m3"),
    ("swvl4", "m3/m3"),
    ("t2m", "K"),
    ("tp", "m"),
    ("u10", "m/s"),
    ("v10", "m/s"),
];

pub fn default_variable_codes() -> Vec<String> {
    DEFAULT_VARIABLES.iter().map(|(c, _)| c.to_string()).collect()
}

/// Unit for a known variable code, empty for unknown codes.
pub fn unit_of(code: &str) -> &'static str {
    DEFAULT_VARIABLES
        .iter()
        .find(|(c, _)| *c == code)
        .map(|(_, u)| *u)
        .unwrap_or("")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub n_lat: usize,
    pub n_lon: usize,
}

impl GridSpec {
    pub fn new(
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
        n_lat: usize,
        n_lon: usize,
    ) -> Result<Self> {
        let spec = GridSpec {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            n_lat,
            n_lon,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid with the given origin, node spacing (degrees) and node counts.
    pub fn with_step(lat_min: f64, lon_min: f64, step: f64, n_lat: usize, n_lon: usize) -> Result<Self> {
        Self::new(
            lat_min,
            lat_min + step * (n_lat as f64 - 1.0),
            lon_min,
            lon_min + step * (n_lon as f64 - 1.0),
            n_lat,
            n_lon,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Metadata("grid bounds must be finite".into()));
        }
        if self.lat_max <= self.lat_min || self.lon_max <= self.lon_min {
            return Err(Error::Metadata(format!(
                "grid bounds must be increasing, got lat [{}, {}] lon [{}, {}]",
                self.lat_min, self.lat_max, self.lon_min, self.lon_max
            )));
        }
        if self.n_lat < 2 || self.n_lon < 2 {
            return Err(Error::Metadata(format!(
                "grid needs at least 2 nodes per axis, got {}x{}",
                self.n_lat, self.n_lon
            )));
        }
        Ok(())
    }

    pub fn n_pixels(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn lat_step(&self) -> f64 {
        (self.lat_max - self.lat_min) / (self.n_lat - 1) as f64
    }

    pub fn lon_step(&self) -> f64 {
        (self.lon_max - self.lon_min) / (self.n_lon - 1) as f64
    }

    pub fn lat(&self, i: usize) -> f64 {
        self.lat_min + i as f64 * self.lat_step()
    }

    pub fn lon(&self, j: usize) -> f64 {
        self.lon_min + j as f64 * self.lon_step()
    }

    /// Flat `[lat, lon]` row-major index.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_lon + j
    }

    pub fn unindex(&self, idx: usize) -> (usize, usize) {
        (idx / self.n_lon, idx % self.n_lon)
    }

    /// Coordinates of a flat pixel index.
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.unindex(idx);
        (self.lat(i), self.lon(j))
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min - COORD_EPS
            && lat <= self.lat_max + COORD_EPS
            && lon >= self.lon_min - COORD_EPS
            && lon <= self.lon_max + COORD_EPS
    }

    /// Nearest node to a location inside the grid bounds.
    pub fn nearest(&self, lat: f64, lon: f64) -> Result<(usize, usize)> {
        if !lat.is_finite() || !lon.is_finite() || !self.contains(lat, lon) {
            return Err(Error::OutOfBounds { lat, lon });
        }
        Ok((
            nearest_node(lat, self.lat_min, self.lat_step(), self.n_lat),
            nearest_node(lon, self.lon_min, self.lon_step(), self.n_lon),
        ))
    }

    /// Node whose Voronoi cell contains the location, or `None` when the location
    /// falls more than half a cell outside the grid.
    pub fn cell_of(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        let fi = (lat - self.lat_min) / self.lat_step();
        let fj = (lon - self.lon_min) / self.lon_step();
        let half = 0.5 + 1e-9;
        if fi < -half || fj < -half || fi > self.n_lat as f64 - 1.0 + half || fj > self.n_lon as f64 - 1.0 + half {
            return None;
        }
        Some((
            nearest_node(lat, self.lat_min, self.lat_step(), self.n_lat),
            nearest_node(lon, self.lon_min, self.lon_step(), self.n_lon),
        ))
    }

    /// True when both grids describe the same nodes.
    pub fn aligned_with(&self, other: &GridSpec) -> bool {
        self.n_lat == other.n_lat
            && self.n_lon == other.n_lon
            && (self.lat_min - other.lat_min).abs() < COORD_EPS
            && (self.lat_max - other.lat_max).abs() < COORD_EPS
            && (self.lon_min - other.lon_min).abs() < COORD_EPS
            && (self.lon_max - other.lon_max).abs() < COORD_EPS
    }

    pub fn ensure_aligned(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self.aligned_with(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: grids are not aligned ({}x{} vs {}x{})",
                self.n_lat, self.n_lon, other.n_lat, other.n_lon
            )))
        }
    }
}

fn nearest_node(x: f64, min: f64, step: f64, n: usize) -> usize {
    let f = ((x - min) / step).round();
    f.clamp(0.0, (n - 1) as f64) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeAxis {
    /// ISO-8601 UTC timestamp of the first step.
    pub start: String,
    pub step_hours: u32,
    pub n_steps: usize,
}

impl TimeAxis {
    pub fn new(start: impl Into<String>, step_hours: u32, n_steps: usize) -> Result<Self> {
        let axis = TimeAxis {
            start: start.into(),
            step_hours,
            n_steps,
        };
        axis.validate()?;
        Ok(axis)
    }

    /// One non-leap year at 3-hourly resolution starting 2020-01-01.
    pub fn desk_default() -> Self {
        TimeAxis {
            start: "2020-01-01T00:00:00Z".into(),
            step_hours: 3,
            n_steps: 2920,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Metadata("time axis needs at least one step".into()));
        }
        if self.step_hours == 0 {
            return Err(Error::Metadata("time step must be positive".into()));
        }
        if !self.start.ends_with('Z') || !self.start.contains('T') {
            return Err(Error::Metadata(format!(
                "time axis start {:?} is not an ISO-8601 UTC timestamp",
                self.start
            )));
        }
        Ok(())
    }

    pub fn steps_per_day(&self) -> f64 {
        24.0 / self.step_hours as f64
    }
}

/// Gridded multi-variable climate series, one `[time, lat, lon]` array per variable.
#[derive(Debug, Clone)]
pub struct ClimateCube {
    spec: GridSpec,
    time: TimeAxis,
    variables: Vec<String>,
    units: Vec<String>,
    values: Vec<Vec<f32>>,
    valid: Vec<bool>,
}

impl ClimateCube {
    /// Builds a cube, deriving the validity mask from the NaN pattern.
    ///
    /// A pixel is invalid iff any variable is NaN at any step there; invalid
    /// pixels are filled with NaN in every variable. Infinite values are rejected.
    pub fn new(
        spec: GridSpec,
        time: TimeAxis,
        variables: Vec<String>,
        units: Vec<String>,
        mut values: Vec<Vec<f32>>,
    ) -> Result<Self> {
        spec.validate()?;
        time.validate()?;
        check_variables(&variables)?;
        if units.len() != variables.len() {
            return Err(Error::Metadata(format!(
                "{} units for {} variables",
                units.len(),
                variables.len()
            )));
        }
        let Some(first) = variables.first() else {
            return Err(Error::Metadata("variable list is empty".into()));
        };
        if values.len() != variables.len() {
            return Err(Error::MissingVariable(
                variables.get(values.len()).unwrap_or(first).clone(),
            ));
        }
        let npix = spec.n_pixels();
        let expected = time.n_steps * npix;
        for (name, arr) in variables.iter().zip(&values) {
            if arr.len() != expected {
                return Err(Error::LengthMismatch {
                    variable: name.clone(),
                    expected,
                    found: arr.len(),
                });
            }
        }

        let mut valid = vec![true; npix];
        for arr in &values {
            for chunk in arr.chunks_exact(npix) {
                for (v, x) in valid.iter_mut().zip(chunk) {
                    if x.is_nan() {
                        *v = false;
                    }
                }
            }
        }
        for (name, arr) in variables.iter().zip(&values) {
            for (t, chunk) in arr.chunks_exact(npix).enumerate() {
                for (p, x) in chunk.iter().enumerate() {
                    if valid[p] && !x.is_finite() {
                        let (lat_idx, lon_idx) = spec.unindex(p);
                        return Err(Error::NonFinite {
                            variable: name.clone(),
                            lat_idx,
                            lon_idx,
                            step: t,
                            value: *x,
                        });
                    }
                }
            }
        }
        if valid.iter().any(|v| !v) {
            for arr in &mut values {
                for chunk in arr.chunks_exact_mut(npix) {
                    for (x, ok) in chunk.iter_mut().zip(&valid) {
                        if !ok && !x.is_nan() {
                            *x = f32::NAN;
                        }
                    }
                }
            }
        }

        Ok(ClimateCube {
            spec,
            time,
            variables,
            units,
            values,
            valid,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn time(&self) -> &TimeAxis {
        &self.time
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    /// Raw `[time, lat, lon]` array for variable `v`.
    pub fn values(&self, v: usize) -> &[f32] {
        &self.values[v]
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, pixel: usize) -> bool {
        self.valid[pixel]
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn variable_index(&self, code: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == code)
    }

    /// Series of one variable at a flat pixel index (no validity check).
    pub fn pixel_series(&self, v: usize, pixel: usize) -> Vec<f64> {
        let npix = self.spec.n_pixels();
        self.values[v]
            .iter()
            .skip(pixel)
            .step_by(npix)
            .map(|x| *x as f64)
            .collect()
    }

    /// All variables' series at a valid pixel.
    pub fn pixel_series_all(&self, pixel: usize) -> Result<Vec<Vec<f64>>> {
        if !self.valid[pixel] {
            let (lat_idx, lon_idx) = self.spec.unindex(pixel);
            return Err(Error::MaskedPixel { lat_idx, lon_idx });
        }
        Ok((0..self.n_variables())
            .map(|v| self.pixel_series(v, pixel))
            .collect())
    }

    /// Per-variable series at the grid node nearest to `(lat, lon)`.
    pub fn extract_series(&self, lat: f64, lon: f64) -> Result<ExtractedSeries> {
        let (lat_idx, lon_idx) = self.spec.nearest(lat, lon)?;
        let pixel = self.spec.index(lat_idx, lon_idx);
        let series = self.pixel_series_all(pixel)?;
        Ok(ExtractedSeries {
            lat_idx,
            lon_idx,
            pixel,
            series,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedSeries {
    pub lat_idx: usize,
    pub lon_idx: usize,
    pub pixel: usize,
    /// One series per cube variable, each `n_steps` long.
    pub series: Vec<Vec<f64>>,
}

fn check_variables(variables: &[String]) -> Result<()> {
    if variables.is_empty() {
        return Err(Error::Metadata("variable list is empty".into()));
    }
    for (i, v) in variables.iter().enumerate() {
        if v.is_empty() || v.contains(['/', '\\']) || v.starts_with('.') {
            return Err(Error::Metadata(format!("invalid variable code {v:?}")));
        }
        if variables[..i].contains(v) {
            return Err(Error::Metadata(format!("duplicate variable {v}")));
        }
    }
    Ok(())
}

/// Single-layer grid of `f32` values with NaN as no-data.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub spec: GridSpec,
    pub values: Vec<f32>,
}

impl Raster {
    pub fn new(spec: GridSpec, values: Vec<f32>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.n_pixels() {
            return Err(Error::DimensionMismatch(format!(
                "raster has {} values for a {}x{} grid",
                values.len(),
                spec.n_lat,
                spec.n_lon
            )));
        }
        Ok(Raster { spec, values })
    }

    pub fn filled(spec: GridSpec, value: f32) -> Self {
        Raster {
            values: vec![value; spec.n_pixels()],
            spec,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[self.spec.index(i, j)]
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        !self.values[idx].is_nan()
    }

    pub fn n_valid(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    /// Pixel-wise mean over valid pixels.
    pub fn mean(&self) -> Option<f64> {
        let (mut s, mut n) = (0.0, 0usize);
        for v in self.values.iter().filter(|v| !v.is_nan()) {
            s += *v as f64;
            n += 1;
        }
        (n > 0).then(|| s / n as f64)
    }
}

/// One NDVI composite: a full grid for a given year and day of year.
#[derive(Debug, Clone, PartialEq)]
pub struct NdviObservation {
    pub year: i32,
    pub doy: u16,
    pub values: Vec<f32>,
}

/// Time-stamped NDVI grids; NaN is no-data.
#[derive(Debug, Clone, PartialEq)]
pub struct NdviRaster {
    spec: GridSpec,
    observations: Vec<NdviObservation>,
}

impl NdviRaster {
    pub fn new(spec: GridSpec, observations: Vec<NdviObservation>) -> Result<Self> {
        spec.validate()?;
        for obs in &observations {
            if obs.values.len() != spec.n_pixels() {
                return Err(Error::DimensionMismatch(format!(
                    "ndvi observation {}_{:03} has {} values for a {}x{} grid",
                    obs.year,
                    obs.doy,
                    obs.values.len(),
                    spec.n_lat,
                    spec.n_lon
                )));
            }
            if !(1..=366).contains(&obs.doy) {
                return Err(Error::Metadata(format!(
                    "ndvi observation {}_{}: day of year out of range",
                    obs.year, obs.doy
                )));
            }
            if let Some(bad) = obs
                .values
                .iter()
                .find(|v| !v.is_nan() && !(-1.0..=1.0).contains(*v))
            {
                return Err(Error::Metadata(format!(
                    "ndvi observation {}_{:03}: value {bad} outside [-1, 1]",
                    obs.year, obs.doy
                )));
            }
        }
        Ok(NdviRaster { spec, observations })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn observations(&self) -> &[NdviObservation] {
        &self.observations
    }

    pub fn years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.observations.iter().map(|o| o.year).collect();
        years.sort_unstable();
        years.dedup();
        years
    }
}
