//! Deterministic synthetic scenarios with planted ground truth.
//!
//! Three smooth spatial fields drive everything: wetness `W`, heat `H` and a
//! per-variable nuisance field `N_v`, each normalized over the grid to zero mean
//! and unit maximum magnitude. Every variable is
//!
//! ```text
//! x_v(t) = M_v + A_v [cos(w_y t - p_v) + 0.3 cos(2 w_y t - q_v)]
//!              + D_v [cos(w_d t - r_v) + 0.3 cos(2 w_d t - s_v)] + e_v(t)
//! ```
//!
//! with annual (`w_y`) and diurnal (`w_d`) angular frequencies, seeded phases and
//! white Gaussian noise `e_v`. Mean, annual amplitude and diurnal amplitude are
//! modulated as `base * (1 + 0.6 m_v)` with `m_v` a seeded mix of `W`, `H` and
//! `N_v`; the annual amplitude of `tp` follows `W` alone and that of `t2m`
//! follows `H` alone.
//!
//! With `rho_v = (A_v / a_v - 1) / 0.6` the relative annual-amplitude anomaly,
//! the planted suitability is
//!
//! ```text
//! s = logistic(2.5 * (rho_tp - rho_t2m) / 2)
//! ```
//!
//! and the binary ground-truth label is `s > 0.5`. A corner of the grid is
//! treated as sea and masked.

use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ClimateCube, GridSpec, NdviObservation, NdviRaster, Raster, TimeAxis};
use crate::error::{Error, Result};
use crate::pipeline::samples::{Category, LabeledSample, MIN_SAMPLE_SPACING_KM};
use crate::seed::{rng_for, TAG_SYNTH};

/// Relative modulation depth of the spatially varying parameters.
pub const MODULATION: f64 = 0.6;
/// Logistic gain of the planted suitability.
pub const SUITABILITY_GAIN: f64 = 2.5;
/// Pixels with `u + v` above this (normalized grid coordinates) are sea.
const SEA_CORNER: f64 = 1.85;

const STREAM_FIELDS: u64 = 1;
const STREAM_PARAMS: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_LANDUSE: u64 = 4;
const STREAM_NDVI: u64 = 5;
const STREAM_SAMPLES: u64 = 6;

/// Base parameters of one synthetic variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariableProfile {
    pub mean: f64,
    pub annual: f64,
    pub diurnal: f64,
    pub noise: f64,
}

/// Base profile for a variable code; unknown codes get a unit-scale profile.
pub fn profile(code: &str) -> VariableProfile {
    let p = |mean, annual, diurnal, noise| VariableProfile {
        mean,
        annual,
        diurnal,
        noise,
    };
    match code {
        "d2m" => p(285.0, 4.0, 1.5, 0.8),
        "evabs" => p(-2e-4, 1e-4, 1.5e-4, 3e-5),
        "evaow" => p(-3e-4, 1e-4, 2e-4, 4e-5),
        "evatc" => p(-5e-5, 3e-5, 4e-5, 1e-5),
        "evavt" => p(-1e-4, 6e-5, 1e-4, 2e-5),
        "sp" => p(95_000.0, 400.0, 150.0, 60.0),
        "src" => p(2e-5, 1e-5, 5e-6, 4e-6),
        "sro" => p(1e-5, 8e-6, 2e-6, 5e-6),
        "ssrd" => p(8e5, 2e5, 9e5, 1e5),
        "ssro" => p(5e-6, 4e-6, 1e-6, 2e-6),
        "stl1" => p(305.0, 8.0, 6.0, 0.8),
        "stl2" => p(304.0, 7.0, 2.0, 0.5),
        "stl3" => p(303.0, 6.0, 0.5, 0.3),
        "stl4" => p(302.0, 4.0, 0.1, 0.2),
        "strd" => p(1.1e6, 1e5, 5e4, 4e4),
        "swvl1" => p(0.12, 0.05, 0.005, 0.01),
        "swvl2" => p(0.14, 0.04, 0.002, 0.008),
        "swvl3" => p(0.16, 0.03, 0.001, 0.005),
        "swvl4" => p(0.18, 0.02, 0.0005, 0.003),
        "t2m" => p(300.0, 8.0, 5.0, 1.0),
        "tp" => p(1e-4, 8e-5, 2e-5, 3e-5),
        "u10" => p(1.0, 1.5, 1.0, 1.2),
        "v10" => p(-0.5, 1.2, 0.8, 1.2),
        _ => p(0.0, 1.0, 0.5, 0.3),
    }
}

/// Smooth field as a sum of a few seeded plane waves, normalized to zero mean and
/// unit maximum magnitude over the grid nodes.
fn smooth_field(rng: &mut ChaCha8Rng, spec: &GridSpec) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let sign = |r: &mut ChaCha8Rng| if r.random::<bool>() { 1.0 } else { -1.0 };
            let kx = sign(rng) * rng.random_range(0.3..1.4);
            let ky = sign(rng) * rng.random_range(0.3..1.4);
            let phase = rng.random_range(0.0..2.0 * PI);
            let weight = rng.random_range(0.5..1.0);
            (kx, ky, phase, weight)
        })
        .collect();
    let mut field = Vec::with_capacity(spec.n_pixels());
    for i in 0..spec.n_lat {
        let u = i as f64 / (spec.n_lat - 1) as f64;
        for j in 0..spec.n_lon {
            let v = j as f64 / (spec.n_lon - 1) as f64;
            let val: f64 = waves
                .iter()
                .map(|(kx, ky, ph, w)| w * (2.0 * PI * (kx * u + ky * v) + ph).cos())
                .sum();
            field.push(val);
        }
    }
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let max = field.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max).max(1e-12);
    field.iter().map(|x| (x - mean) / max).collect()
}

fn sea_mask(spec: &GridSpec) -> Vec<bool> {
    let mut valid = Vec::with_capacity(spec.n_pixels());
    for i in 0..spec.n_lat {
        let u = i as f64 / (spec.n_lat - 1) as f64;
        for j in 0..spec.n_lon {
            let v = j as f64 / (spec.n_lon - 1) as f64;
            valid.push(u + v <= SEA_CORNER);
        }
    }
    valid
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct VariablePlan {
    profile: VariableProfile,
    phases: [f64; 4],
    mean_mod: Vec<f64>,
    annual_mod: Vec<f64>,
    diurnal_mod: Vec<f64>,
}

/// Generates the default 23-variable cube and the planted suitability grid.
pub fn synth_cube(spec: &GridSpec, time: &TimeAxis, seed: u64) -> Result<(ClimateCube, Raster)> {
    synth_cube_with(spec, time, seed, &super::default_variable_codes())
}

/// As [`synth_cube`] with an explicit variable list; `tp` and `t2m` must be present.
pub fn synth_cube_with(spec: &GridSpec, time: &TimeAxis, seed: u64, variables: &[String]) -> Result<(ClimateCube, Raster)> {
    spec.validate()?;
    time.validate()?;
    for needed in ["tp", "t2m"] {
        if !variables.iter().any(|v| v == needed) {
            return Err(Error::MissingVariable(needed.into()));
        }
    }
    let npix = spec.n_pixels();
    let valid = sea_mask(spec);

    let mut field_rng = rng_for(seed, &[TAG_SYNTH, STREAM_FIELDS]);
    let wet = smooth_field(&mut field_rng, spec);
    let heat = smooth_field(&mut field_rng, spec);

    let mut param_rng = rng_for(seed, &[TAG_SYNTH, STREAM_PARAMS]);
    let mut plans = Vec::with_capacity(variables.len());
    for code in variables {
        let nuisance = smooth_field(&mut field_rng, spec);
        let c_w: f64 = param_rng.random_range(-1.0..1.0);
        let c_h: f64 = param_rng.random_range(-1.0..1.0);
        let c_n: f64 = param_rng.random_range(0.2..0.6);
        let norm = c_w.abs() + c_h.abs() + c_n;
        let mix: Vec<f64> = (0..npix)
            .map(|p| (c_w * wet[p] + c_h * heat[p] + c_n * nuisance[p]) / norm)
            .collect();
        let phases = [
            param_rng.random_range(0.0..2.0 * PI),
            param_rng.random_range(0.0..2.0 * PI),
            param_rng.random_range(0.0..2.0 * PI),
            param_rng.random_range(0.0..2.0 * PI),
        ];
        let annual_mod = match code.as_str() {
            "tp" => wet.clone(),
            "t2m" => heat.clone(),
            _ => mix.clone(),
        };
        plans.push(VariablePlan {
            profile: profile(code),
            phases,
            mean_mod: mix.clone(),
            annual_mod,
            diurnal_mod: mix,
        });
    }

    let step_h = time.step_hours as f64;
    let w_year = 2.0 * PI / (365.0 * 24.0);
    let w_day = 2.0 * PI / 24.0;
    let mut values = Vec::with_capacity(variables.len());
    for (v, plan) in plans.iter().enumerate() {
        let prof = plan.profile;
        let [p1, p2, p3, p4] = plan.phases;
        let mean: Vec<f64> = plan
            .mean_mod
            .iter()
            .map(|m| prof.mean + 0.5 * prof.annual * MODULATION * m)
            .collect();
        let annual: Vec<f64> = plan
            .annual_mod
            .iter()
            .map(|m| prof.annual * (1.0 + MODULATION * m))
            .collect();
        let diurnal: Vec<f64> = plan
            .diurnal_mod
            .iter()
            .map(|m| prof.diurnal * (1.0 + MODULATION * m))
            .collect();
        let mut noise_rng = rng_for(seed, &[TAG_SYNTH, STREAM_NOISE, v as u64]);
        let mut arr = vec![0f32; time.n_steps * npix];
        for t in 0..time.n_steps {
            let h = t as f64 * step_h;
            let yb = (w_year * h - p1).cos() + 0.3 * (2.0 * w_year * h - p2).cos();
            let db = (w_day * h - p3).cos() + 0.3 * (2.0 * w_day * h - p4).cos();
            let row = &mut arr[t * npix..(t + 1) * npix];
            for p in 0..npix {
                let e: f64 = noise_rng.sample(StandardNormal);
                row[p] = if valid[p] {
                    (mean[p] + annual[p] * yb + diurnal[p] * db + prof.noise * e) as f32
                } else {
                    f32::NAN
                };
            }
        }
        values.push(arr);
    }

    let suitability = (0..npix)
        .map(|p| {
            if valid[p] {
                logistic(SUITABILITY_GAIN * (wet[p] - heat[p]) / 2.0) as f32
            } else {
                f32::NAN
            }
        })
        .collect();
    let units = variables.iter().map(|c| super::unit_of(c).to_string()).collect();
    let cube = ClimateCube::new(*spec, time.clone(), variables.to_vec(), units, values)?;
    Ok((cube, Raster::new(*spec, suitability)?))
}

/// Planted land use per climate pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandUse {
    Natural = 0,
    /// Vegetation maintained by irrigation despite low suitability.
    Irrigated = 1,
    /// Vegetation removed despite high suitability.
    Degraded = 2,
}

impl LandUse {
    pub fn code(self) -> f32 {
        self as u8 as f32
    }
}

/// Suitability above which a pixel is clearly suitable for sampling purposes.
pub const HIGH_SUITABILITY: f32 = 0.6;
/// Suitability below which a pixel is clearly unsuitable for sampling purposes.
pub const LOW_SUITABILITY: f32 = 0.4;

/// Suitability band `[lo, hi)` where irrigation is planted: marginal, mostly unsuitable land.
pub const IRRIGATED_BAND: (f32, f32) = (0.25, 0.5);
/// Suitability band `(lo, hi]` where degradation is planted: marginal, mostly suitable land.
pub const DEGRADED_BAND: (f32, f32) = (0.5, 0.75);

/// Picks irrigated and degraded pixels in the marginal suitability bands
/// (8% of each band, at least 16 when available).
pub fn synth_landuse(suitability: &Raster, seed: u64) -> Raster {
    let mut rng = rng_for(seed, &[TAG_SYNTH, STREAM_LANDUSE]);
    let mut codes: Vec<f32> = suitability
        .values
        .iter()
        .map(|s| if s.is_nan() { f32::NAN } else { LandUse::Natural.code() })
        .collect();
    let low: Vec<usize> = (0..codes.len())
        .filter(|p| (IRRIGATED_BAND.0..IRRIGATED_BAND.1).contains(&suitability.values[*p]))
        .collect();
    let high: Vec<usize> = (0..codes.len())
        .filter(|p| {
            let s = suitability.values[*p];
            s > DEGRADED_BAND.0 && s <= DEGRADED_BAND.1
        })
        .collect();
    for (pool, kind) in [(low, LandUse::Irrigated), (high, LandUse::Degraded)] {
        let count = ((pool.len() as f64 * 0.08).round() as usize).max(16).min(pool.len());
        for p in pool.choose_multiple(&mut rng, count) {
            codes[*p] = kind.code();
        }
    }
    Raster {
        spec: suitability.spec,
        values: codes,
    }
}

/// Expected summer NDVI of a climate pixel given its suitability and land use.
fn summer_base(s: f64, landuse: f32, jitter: f64) -> f64 {
    match landuse as u8 {
        1 => 0.28 + 0.05 * jitter,
        2 => 0.025 + 0.01 * jitter,
        _ => 0.02 + 0.30 * s.powf(1.5) + 0.01 * (jitter - 0.5),
    }
}

/// Ten-day NDVI composites on a grid `refine` times finer than the climate grid.
///
/// Composites fall on days 1, 11, ..., 361 of each year; a winter greening pulse
/// proportional to suitability peaks mid-January, outside the summer window.
pub fn synth_ndvi(suitability: &Raster, landuse: &Raster, years: &[i32], refine: usize, seed: u64) -> Result<NdviRaster> {
    let coarse = suitability.spec;
    if refine == 0 {
        return Err(Error::InvalidInput("ndvi refinement factor must be positive".into()));
    }
    let fine = GridSpec::new(
        coarse.lat_min,
        coarse.lat_max,
        coarse.lon_min,
        coarse.lon_max,
        refine * (coarse.n_lat - 1) + 1,
        refine * (coarse.n_lon - 1) + 1,
    )?;
    let mut rng = rng_for(seed, &[TAG_SYNTH, STREAM_NDVI]);
    let jitter: Vec<f64> = (0..coarse.n_pixels()).map(|_| rng.random::<f64>()).collect();
    let mut base = Vec::with_capacity(fine.n_pixels());
    let mut greening = Vec::with_capacity(fine.n_pixels());
    for i in 0..fine.n_lat {
        for j in 0..fine.n_lon {
            let (ci, cj) = coarse
                .cell_of(fine.lat(i), fine.lon(j))
                .expect("fine grid lies inside the coarse grid");
            let c = coarse.index(ci, cj);
            let s = suitability.values[c] as f64;
            if s.is_nan() {
                base.push(f64::NAN);
                greening.push(0.0);
                continue;
            }
            let micro: f64 = rng.sample::<f64, _>(StandardNormal) * 0.005;
            base.push(summer_base(s, landuse.values[c], jitter[c]) + micro);
            greening.push(0.05 * s);
        }
    }
    let mut observations = Vec::new();
    for &year in years {
        for doy in (1..=361).step_by(10) {
            let dist = ((doy as f64 - 15.0 + 182.5).rem_euclid(365.0) - 182.5).abs();
            let pulse = (-(dist / 40.0).powi(2)).exp();
            let values = base
                .iter()
                .zip(&greening)
                .map(|(b, g)| {
                    if b.is_nan() {
                        f32::NAN
                    } else {
                        let e: f64 = rng.sample(StandardNormal);
                        (b + g * pulse + 0.01 * e).clamp(-1.0, 1.0) as f32
                    }
                })
                .collect();
            observations.push(NdviObservation {
                year,
                doy: doy as u16,
                values,
            });
        }
    }
    NdviRaster::new(fine, observations)
}

/// Number of reference samples per category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SampleCounts {
    pub hi_suit_hi_veg: usize,
    pub lo_suit_lo_veg: usize,
    pub lo_suit_hi_veg: usize,
    pub hi_suit_lo_veg: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        SampleCounts {
            hi_suit_hi_veg: 101,
            lo_suit_lo_veg: 101,
            lo_suit_hi_veg: 14,
            hi_suit_lo_veg: 14,
        }
    }
}

impl SampleCounts {
    pub fn total(&self) -> usize {
        self.hi_suit_hi_veg + self.lo_suit_lo_veg + self.lo_suit_hi_veg + self.hi_suit_lo_veg
    }

    pub fn get(&self, c: Category) -> usize {
        match c {
            Category::HiSuitHiVeg => self.hi_suit_hi_veg,
            Category::LoSuitLoVeg => self.lo_suit_lo_veg,
            Category::LoSuitHiVeg => self.lo_suit_hi_veg,
            Category::HiSuitLoVeg => self.hi_suit_lo_veg,
        }
    }
}

/// Draws labeled reference pixels the way an analyst would: clear cases only.
///
/// `summer_ndvi` must be aligned with the climate grid. Vegetated categories need
/// summer NDVI at or above `vegetation_threshold`, bare ones below it.
pub fn synth_samples(
    suitability: &Raster,
    landuse: &Raster,
    summer_ndvi: &Raster,
    counts: &SampleCounts,
    vegetation_threshold: f64,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    let spec = suitability.spec;
    spec.ensure_aligned(&landuse.spec, "land use")?;
    spec.ensure_aligned(&summer_ndvi.spec, "summer ndvi")?;
    let mut rng = rng_for(seed, &[TAG_SYNTH, STREAM_SAMPLES]);
    let mut samples = Vec::with_capacity(counts.total());
    for category in Category::ALL {
        let pool: Vec<usize> = (0..spec.n_pixels())
            .filter(|&p| {
                let (s, lu, ndvi) = (suitability.values[p], landuse.values[p], summer_ndvi.values[p] as f64);
                if s.is_nan() || ndvi.is_nan() {
                    return false;
                }
                let vegetated = ndvi >= vegetation_threshold;
                match category {
                    Category::HiSuitHiVeg => lu == LandUse::Natural.code() && s > HIGH_SUITABILITY && vegetated,
                    Category::LoSuitLoVeg => lu == LandUse::Natural.code() && s < LOW_SUITABILITY && !vegetated,
                    Category::LoSuitHiVeg => lu == LandUse::Irrigated.code() && vegetated,
                    Category::HiSuitLoVeg => lu == LandUse::Degraded.code() && !vegetated,
                }
            })
            .collect();
        let wanted = counts.get(category);
        if pool.len() < wanted {
            return Err(Error::InvalidInput(format!(
                "only {} eligible pixels for {category}, {wanted} requested",
                pool.len()
            )));
        }
        let mut picked: Vec<usize> = pool.choose_multiple(&mut rng, wanted).copied().collect();
        picked.sort_unstable();
        for p in picked {
            let (lat, lon) = spec.coords(p);
            let id = samples.len() as u32;
            samples.push(LabeledSample::new(id, lat, lon, category, summer_ndvi.values[p] as f64));
        }
    }
    crate::pipeline::samples::validate_samples(&samples, MIN_SAMPLE_SPACING_KM)?;
    Ok(samples)
}

/// Complete synthetic scenario: climate, NDVI, planted truth and reference samples.
#[derive(Debug, Clone)]
pub struct SynthScenario {
    pub cube: ClimateCube,
    pub suitability: Raster,
    pub landuse: Raster,
    pub ndvi: NdviRaster,
    /// Summer NDVI mean block-averaged onto the climate grid.
    pub summer_ndvi: Raster,
    pub samples: Vec<LabeledSample>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    pub grid: GridSpec,
    pub time: TimeAxis,
    pub variables: Vec<String>,
    pub ndvi_years: Vec<i32>,
    pub ndvi_refine: usize,
    pub counts: SampleCounts,
    pub vegetation_threshold: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// 32x32 nodes at 0.1 degree, one year of 3-hourly steps, 23 variables.
    pub fn desk(seed: u64) -> Self {
        SynthConfig {
            grid: GridSpec::with_step(18.0, 40.0, 0.1, 32, 32).expect("static grid"),
            time: TimeAxis::desk_default(),
            variables: super::default_variable_codes(),
            ndvi_years: (2020..=2024).collect(),
            ndvi_refine: 3,
            counts: SampleCounts::default(),
            vegetation_threshold: 0.15,
            seed,
        }
    }
}

impl SynthScenario {
    pub fn generate(config: &SynthConfig) -> Result<Self> {
        let (cube, suitability) = synth_cube_with(&config.grid, &config.time, config.seed, &config.variables)?;
        let landuse = synth_landuse(&suitability, config.seed);
        let ndvi = synth_ndvi(&suitability, &landuse, &config.ndvi_years, config.ndvi_refine, config.seed)?;
        let summer_fine = super::summer_ndvi_mean(&ndvi, &config.ndvi_years)?;
        let summer_ndvi = super::regrid_ndvi(&summer_fine, &config.grid)?;
        let samples = synth_samples(
            &suitability,
            &landuse,
            &summer_ndvi,
            &config.counts,
            config.vegetation_threshold,
            config.seed,
        )?;
        Ok(SynthScenario {
            cube,
            suitability,
            landuse,
            ndvi,
            summer_ndvi,
            samples,
        })
    }

    /// 1.0 on irrigated pixels (candidate analogs must avoid them), 0.0 elsewhere.
    pub fn exclusion_mask(&self) -> Raster {
        Raster {
            spec: self.landuse.spec,
            values: self
                .landuse
                .values
                .iter()
                .map(|c| {
                    if c.is_nan() {
                        f32::NAN
                    } else if *c == LandUse::Irrigated.code() {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }
}
