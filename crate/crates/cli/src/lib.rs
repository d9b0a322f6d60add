//! `drycss`: stage-per-subcommand pipeline from a climate cube to restoration
//! candidates and their climate analogs.
//!
//! Every stage writes `<out>/<stage>/` and adds an entry with output digests to
//! `<out>/manifest.json`. Exit codes: 0 success, 1 usage, 2 data, 3 numerical.

pub mod config;
pub mod manifest;
pub mod pgm;
pub mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use drycss_core::{Error, ErrorKind};

use crate::config::RunConfig;
use crate::stages::{AnalogArgs, CandidateArgs, Context, Layout};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "drycss", version, about = "Climate suitability screening for dryland restoration")]
pub struct Cli {
    /// Output root; each stage writes a subdirectory.
    #[arg(long, global = true, default_value = "drycss-out")]
    pub out: PathBuf,

    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root seed, overriding the config `seed` [config default: 7].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for training and mapping; 0 uses every core.
    #[arg(long, global = true, env = "DRYCSS_JOBS", default_value_t = 0)]
    pub jobs: usize,

    /// Replace existing stage outputs.
    #[arg(long, global = true, default_value_t = false)]
    pub force: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic climate cube, NDVI stack, labeled samples and truth maps.
    Synth,
    /// Fit the spectral feature space on the samples and average summer NDVI.
    Features,
    /// Train the BLUP and neural model grid with repeated holdouts.
    Train,
    /// Map suitability over the grid and rescore the reference samples.
    Predict,
    /// Fit the linear map from suitability score to NDVI.
    Calibrate,
    /// Calibrated suitability minus observed summer NDVI.
    Opportunity,
    /// Pick spaced restoration candidates and screen them by site attributes.
    Candidates {
        /// Screening rules, one per line [default: built-in accessibility and land-use rules].
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Site attribute CSV keyed by `No.` or by lat/lon; no screening without it.
        #[arg(long)]
        attributes: Option<PathBuf>,
        /// Number of candidates [config thresholds.candidate_count, default: 25].
        #[arg(long)]
        count: Option<usize>,
        /// Minimum great-circle spacing between candidates in km [config thresholds.min_spacing_km, default: 9].
        #[arg(long)]
        min_spacing_km: Option<f64>,
    },
    /// Find the greenest climatically close pixel for each candidate.
    Analogs {
        /// Raster stem of pixels analogs must avoid (non-zero) [default: config paths.exclusion, then synth/exclusion].
        #[arg(long)]
        exclusion: Option<PathBuf>,
        /// Climate distance limit [config analogs.max_climate_dist, default: 10th percentile per candidate].
        #[arg(long)]
        max_climate_dist: Option<f64>,
        /// Required NDVI margin of the analog over the candidate [config analogs.min_ndvi_margin, default: 0.02].
        #[arg(long)]
        min_ndvi_margin: Option<f64>,
    },
    /// Write the metrics table, summary CSVs and greymap heatmaps.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Features => "features",
            Command::Train => "train",
            Command::Predict => "predict",
            Command::Calibrate => "calibrate",
            Command::Opportunity => "opportunity",
            Command::Candidates { .. } => "candidates",
            Command::Analogs { .. } => "analogs",
            Command::Report => "report",
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}

/// Runs one already-parsed invocation.
pub fn execute(cli: Cli) -> Result<(), Error> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let ctx = Context {
        config,
        layout: Layout::new(&cli.out),
        force: cli.force,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("--jobs {}: {e}", cli.jobs)))?;
    pool.install(|| match &cli.command {
        Command::Synth => stages::synth(&ctx),
        Command::Features => stages::features(&ctx),
        Command::Train => stages::train(&ctx),
        Command::Predict => stages::predict(&ctx),
        Command::Calibrate => stages::calibrate(&ctx),
        Command::Opportunity => stages::opportunity(&ctx),
        Command::Candidates {
            rules,
            attributes,
            count,
            min_spacing_km,
        } => stages::candidates(
            &ctx,
            &CandidateArgs {
                rules: rules.clone(),
                attributes: attributes.clone(),
                count: *count,
                min_spacing_km: *min_spacing_km,
            },
        ),
        Command::Analogs {
            exclusion,
            max_climate_dist,
            min_ndvi_margin,
        } => stages::analogs(
            &ctx,
            &AnalogArgs {
                exclusion: exclusion.clone(),
                max_climate_dist: *max_climate_dist,
                min_ndvi_margin: *min_ndvi_margin,
            },
        ),
        Command::Report => stages::report(&ctx),
    })
}

/// Parses `args` (program name first), runs the stage and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stage = cli.command.name();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("drycss {stage}: {e}");
            exit_code(&e)
        }
    }
}
