//! Run configuration, read from a TOML document.
//!
//! Every key is optional; missing keys take the defaults below. Relative input
//! paths resolve against the working directory, output lands under `--out`.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! cube = "data/cube"          # default: <out>/synth/cube
//! ndvi = "data/ndvi"          # default: <out>/synth/ndvi
//! samples = "data/sites.csv"  # default: <out>/synth/samples.csv
//! exclusion = "data/mask"     # raster stem; default: <out>/synth/exclusion when present
//!
//! [synth]
//! n_lat = 32
//! n_lon = 32
//! n_steps = 2920
//!
//! [features]
//! k_max = 64
//! ranking = "mean_energy"     # or "mean_amplitude"
//!
//! [training]
//! blup_sizes = [1, 2, 4, 8, 16, 32, 64]
//! nn_latents = [4, 8, 16, 32, 64]
//! nn_input_k = 8
//! repetitions = 10
//!
//! [thresholds]
//! vegetation_ndvi = 0.15
//! css = 0.5
//! candidate_count = 25
//! min_spacing_km = 9.0
//!
//! [analogs]
//! min_ndvi_margin = 0.02
//! distance_mode = "lowest_raw"
//! channels = 32
//! ```

use std::path::{Path, PathBuf};

use drycss_core::grid::synth::{SampleCounts, SynthConfig};
use drycss_core::grid::{default_variable_codes, GridSpec, TimeAxis};
use drycss_core::opportunity::AnalogParams;
use drycss_core::pipeline::training::TrainingConfig;
use drycss_core::spectral::{DistanceMode, RankingRule, DISTANCE_CHANNELS};
use drycss_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub cube: Option<PathBuf>,
    pub ndvi: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub exclusion: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub lat_min: f64,
    pub lon_min: f64,
    pub step_deg: f64,
    pub n_lat: usize,
    pub n_lon: usize,
    pub n_steps: usize,
    pub step_hours: u32,
    /// Empty: the 23 default variables.
    pub variables: Vec<String>,
    pub ndvi_years: Vec<i32>,
    pub ndvi_refine: usize,
    pub counts: SampleCounts,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::desk(0);
        SynthSection {
            lat_min: d.grid.lat_min,
            lon_min: d.grid.lon_min,
            step_deg: d.grid.lat_step(),
            n_lat: d.grid.n_lat,
            n_lon: d.grid.n_lon,
            n_steps: d.time.n_steps,
            step_hours: d.time.step_hours,
            variables: Vec::new(),
            ndvi_years: d.ndvi_years,
            ndvi_refine: d.ndvi_refine,
            counts: d.counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    /// Ranked bins kept per variable; clipped to the number of one-sided bins.
    pub k_max: usize,
    pub ranking: RankingRule,
    /// NDVI years averaged into the summer mean; empty: every year present.
    pub ndvi_years: Vec<i32>,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            k_max: 64,
            ranking: RankingRule::default(),
            ndvi_years: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub vegetation_ndvi: f64,
    pub css: f64,
    pub candidate_count: usize,
    pub min_spacing_km: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            vegetation_ndvi: 0.15,
            css: 0.5,
            candidate_count: 25,
            min_spacing_km: 9.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalogSection {
    /// Absent: the 10th percentile of each candidate's distance map.
    pub max_climate_dist: Option<f64>,
    pub min_ndvi_margin: f64,
    pub distance_mode: DistanceMode,
    pub channels: usize,
}

impl Default for AnalogSection {
    fn default() -> Self {
        AnalogSection {
            max_climate_dist: None,
            min_ndvi_margin: AnalogParams::default().min_ndvi_margin,
            distance_mode: DistanceMode::default(),
            channels: DISTANCE_CHANNELS,
        }
    }
}

impl AnalogSection {
    pub fn params(&self) -> AnalogParams {
        AnalogParams {
            max_climate_dist: self.max_climate_dist,
            min_ndvi_margin: self.min_ndvi_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthSection,
    pub features: FeaturesSection,
    pub training: TrainingConfig,
    pub thresholds: Thresholds,
    pub analogs: AnalogSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            paths: Paths::default(),
            synth: SynthSection::default(),
            features: FeaturesSection::default(),
            training: TrainingConfig::default(),
            thresholds: Thresholds::default(),
            analogs: AnalogSection::default(),
        }
    }
}

fn check(ok: bool, field: &str, msg: impl std::fmt::Display) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("config field {field}: {msg}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        check((0.0..=1.0).contains(&t.vegetation_ndvi), "thresholds.vegetation_ndvi", "must lie in [0, 1]")?;
        check(t.css.is_finite(), "thresholds.css", "must be finite")?;
        check(t.candidate_count > 0, "thresholds.candidate_count", "must be positive")?;
        check(t.min_spacing_km >= 0.0, "thresholds.min_spacing_km", "must be non-negative")?;
        check(self.features.k_max > 0, "features.k_max", "must be positive")?;
        let a = &self.analogs;
        check(a.min_ndvi_margin >= 0.0, "analogs.min_ndvi_margin", "must be non-negative")?;
        check(a.channels > 0, "analogs.channels", "must be positive")?;
        if let Some(d) = a.max_climate_dist {
            check(d >= 0.0, "analogs.max_climate_dist", "must be non-negative")?;
        }
        let s = &self.synth;
        check(s.n_lat >= 2 && s.n_lon >= 2, "synth.n_lat/n_lon", "need at least 2 nodes per axis")?;
        check(s.step_deg > 0.0, "synth.step_deg", "must be positive")?;
        check(s.ndvi_refine > 0, "synth.ndvi_refine", "must be positive")?;
        check(self.training.repetitions > 0, "training.repetitions", "must be positive")?;
        check(
            self.training.holdout_fraction > 0.0 && self.training.holdout_fraction < 1.0,
            "training.holdout_fraction",
            "must lie in (0, 1)",
        )?;
        self.training.autoencoder.validate()?;
        self.training.classifier.validate()
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let s = &self.synth;
        Ok(SynthConfig {
            grid: GridSpec::with_step(s.lat_min, s.lon_min, s.step_deg, s.n_lat, s.n_lon)?,
            time: TimeAxis::new(TimeAxis::desk_default().start, s.step_hours, s.n_steps)?,
            variables: if s.variables.is_empty() {
                default_variable_codes()
            } else {
                s.variables.clone()
            },
            ndvi_years: s.ndvi_years.clone(),
            ndvi_refine: s.ndvi_refine,
            counts: s.counts,
            vegetation_threshold: self.thresholds.vegetation_ndvi,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[thresholds]\ncss_threshold = 0.4\n").is_err());
    }

    #[test]
    fn partial_sections() {
        let cfg: RunConfig = toml::from_str(
            "seed = 3\n[training]\nrepetitions = 2\nblup_sizes = [2, 4]\n[training.classifier]\nepochs = 20\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.training.repetitions, 2);
        assert_eq!(cfg.training.classifier.epochs, 20);
        assert_eq!(cfg.training.classifier.batch_size, 32);
        assert_eq!(cfg.thresholds.candidate_count, 25);
    }

    #[test]
    fn range_checks_name_the_field() {
        let mut cfg = RunConfig::default();
        cfg.thresholds.vegetation_ndvi = 1.5;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("thresholds.vegetation_ndvi"), "{msg}");
    }
}
