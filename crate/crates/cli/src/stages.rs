//! One function per subcommand. Each reads upstream artifacts, writes its own
//! stage directory under the output root and records it in the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use drycss_core::binio::{read_json, write_json};
use drycss_core::grid::synth::SynthScenario;
use drycss_core::grid::{load_cube, load_ndvi, load_raster, regrid_ndvi, save_cube, save_ndvi, save_raster, summer_ndvi_mean};
use drycss_core::opportunity::{
    extract_candidates, filter_candidates, find_analogs, join_attributes, opportunity_map, uplift_report,
    write_candidates_csv, write_matches_csv, AnalogOutcome, AttributeTable, CandidateSite, RuleSet,
};
use drycss_core::pipeline::calibration::{fit_calibration, Calibration};
use drycss_core::pipeline::ensemble::Ensemble;
use drycss_core::pipeline::mapping::{distance_vectors, fit_feature_space, predict_map, sample_features};
use drycss_core::pipeline::metrics::map_agreement_iou;
use drycss_core::pipeline::reclassify::{category_means, read_reclassified_csv, reclassify, write_reclassified_csv, CategoryMeans};
use drycss_core::pipeline::samples::{read_samples_csv, write_samples_csv};
use drycss_core::pipeline::training::{
    run_training_grid, write_aggregates_csv, write_aggregates_table, write_metrics_csv, write_predictions_csv, Aggregate,
};
use drycss_core::spectral::{climate_distance, n_bins, DistanceMode, FeatureSpace};
use drycss_core::{ClimateCube, Error, Raster, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::pgm::write_pgm;

/// File layout below the output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Layout { out: out.into() }
    }

    pub fn stage(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn feature_space(&self) -> PathBuf {
        self.stage("features").join("feature_space.json")
    }

    pub fn summer_ndvi(&self) -> PathBuf {
        self.stage("features").join("summer_ndvi")
    }

    pub fn models(&self) -> PathBuf {
        self.stage("train").join("models")
    }

    pub fn css(&self, which: &str) -> PathBuf {
        self.stage("predict").join(format!("css_{which}"))
    }

    pub fn reclassified(&self) -> PathBuf {
        self.stage("predict").join("reclassified.csv")
    }

    pub fn calibration(&self) -> PathBuf {
        self.stage("calibrate").join("calibration.json")
    }

    pub fn difference(&self) -> PathBuf {
        self.stage("opportunity").join("difference")
    }

    pub fn candidates_json(&self) -> PathBuf {
        self.stage("candidates").join("candidates.json")
    }

    pub fn climate_distance(&self) -> PathBuf {
        self.stage("analogs").join("climate_distance")
    }
}

/// Everything a stage needs besides its own flags.
pub struct Context {
    pub config: RunConfig,
    pub layout: Layout,
    pub force: bool,
}

impl Context {
    fn seed(&self) -> u64 {
        self.config.seed
    }

    fn cube_dir(&self) -> PathBuf {
        self.config.paths.cube.clone().unwrap_or_else(|| self.layout.stage("synth").join("cube"))
    }

    fn ndvi_dir(&self) -> PathBuf {
        self.config.paths.ndvi.clone().unwrap_or_else(|| self.layout.stage("synth").join("ndvi"))
    }

    fn samples_csv(&self) -> PathBuf {
        self.config
            .paths
            .samples
            .clone()
            .unwrap_or_else(|| self.layout.stage("synth").join("samples.csv"))
    }

    fn load_cube(&self) -> Result<ClimateCube> {
        let dir = self.cube_dir();
        require(&dir.join("meta.json"), "synth")?;
        load_cube(&dir)
    }

    /// Empties (with `force`) or creates the stage directory.
    fn begin(&self, stage: &str) -> Result<PathBuf> {
        let dir = self.layout.stage(stage);
        if dir.exists() {
            let non_empty = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?.next().is_some();
            if non_empty {
                if !self.force {
                    return Err(Error::AlreadyExists(dir));
                }
                fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn finish(&self, stage: &str, dir: &Path, details: serde_json::Value) -> Result<()> {
        let mut m = Manifest::load_or_new(&self.layout.out, self.seed())?;
        m.record(&self.layout.out, stage, dir, self.seed(), details)?;
        m.save(&self.layout.out)
    }

    fn record_grid(&self, grid: &drycss_core::GridSpec) -> Result<()> {
        let mut m = Manifest::load_or_new(&self.layout.out, self.seed())?;
        m.grid = Some(*grid);
        m.save(&self.layout.out)
    }
}

/// Fails with a data error naming `path` and the stage that produces it.
pub fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Metadata(format!(
            "missing input {} (produced by `drycss {producer}`)",
            path.display()
        )))
    }
}

fn require_raster(stem: &Path, producer: &str) -> Result<Raster> {
    require(&stem.with_extension("json"), producer)?;
    Ok(load_raster(stem)?.0)
}

pub fn synth(ctx: &Context) -> Result<()> {
    let dir = ctx.begin("synth")?;
    let cfg = ctx.config.synth_config()?;
    let sc = SynthScenario::generate(&cfg)?;
    save_cube(&sc.cube, &dir.join("cube"), false)?;
    save_ndvi(&sc.ndvi, &dir.join("ndvi"), false)?;
    write_samples_csv(&dir.join("samples.csv"), &sc.samples)?;
    let prov = vec![format!("seed {}", cfg.seed)];
    save_raster(&dir.join("suitability"), &sc.suitability, "suitability", prov.clone(), false)?;
    save_raster(&dir.join("landuse"), &sc.landuse, "landuse", prov.clone(), false)?;
    save_raster(&dir.join("exclusion"), &sc.exclusion_mask(), "exclusion", prov, false)?;
    write_json(&dir.join("config.json"), &cfg)?;
    ctx.record_grid(&cfg.grid)?;
    log::info!("synthesized {} samples on a {}x{} grid", sc.samples.len(), cfg.grid.n_lat, cfg.grid.n_lon);
    ctx.finish("synth", &dir, json!({ "samples": sc.samples.len() }))
}

pub fn features(ctx: &Context) -> Result<()> {
    let cube = ctx.load_cube()?;
    let samples_path = ctx.samples_csv();
    require(&samples_path, "synth")?;
    let samples = read_samples_csv(&samples_path)?;
    let ndvi_dir = ctx.ndvi_dir();
    require(&ndvi_dir.join("meta.json"), "synth")?;
    let ndvi = load_ndvi(&ndvi_dir)?;
    let dir = ctx.begin("features")?;

    let bins = n_bins(cube.time().n_steps);
    let mut k_max = ctx.config.features.k_max;
    if k_max > bins {
        log::warn!("features.k_max {k_max} exceeds the {bins} available bins; clipped");
        k_max = bins;
    }
    let vars = cube.variables().to_vec();
    let space = fit_feature_space(&cube, &vars, &samples, k_max, ctx.config.features.ranking)?;
    write_json(&ctx.layout.feature_space(), &space)?;

    let years = if ctx.config.features.ndvi_years.is_empty() {
        ndvi.years()
    } else {
        ctx.config.features.ndvi_years.clone()
    };
    let summer = regrid_ndvi(&summer_ndvi_mean(&ndvi, &years)?, cube.spec())?;
    let prov = years.iter().map(|y| y.to_string()).collect();
    save_raster(&ctx.layout.summer_ndvi(), &summer, "summer_ndvi", prov, false)?;
    ctx.record_grid(cube.spec())?;
    ctx.finish(
        "features",
        &dir,
        json!({ "k_max": k_max, "lineage": space.lineage(), "samples": samples.len() }),
    )
}

fn load_space(ctx: &Context) -> Result<FeatureSpace> {
    let path = ctx.layout.feature_space();
    require(&path, "features")?;
    let space: FeatureSpace = read_json(&path)?;
    space.validate()?;
    Ok(space)
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary {
    kind: String,
    size: usize,
    repetition: usize,
    seed: u64,
    train_rmse: f64,
    val_rmse: f64,
    train_r: f64,
    val_r: f64,
    bundle: Option<String>,
    failure: Option<String>,
}

pub fn train(ctx: &Context) -> Result<()> {
    let space = load_space(ctx)?;
    let cube = ctx.load_cube()?;
    let samples_path = ctx.samples_csv();
    require(&samples_path, "synth")?;
    let samples = read_samples_csv(&samples_path)?;
    let training = &ctx.config.training;
    training.validate(&space)?;
    let dir = ctx.begin("train")?;

    let x = sample_features(&cube, &space, &samples)?;
    let grid = run_training_grid(&samples, &space, &x, training, ctx.seed())?;
    let models = ctx.layout.models();
    fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
    grid.ensemble.save(&models)?;
    write_metrics_csv(&dir.join("metrics.csv"), &grid.runs)?;
    write_predictions_csv(&dir.join("predictions.csv"), &grid.predictions)?;
    let aggs = grid.aggregates();
    write_aggregates_csv(&dir.join("aggregates.csv"), &aggs)?;
    let ens_r = grid.ensemble_validation_r();
    let runs: Vec<RunSummary> = grid
        .runs
        .iter()
        .map(|r| RunSummary {
            kind: r.kind.to_string(),
            size: r.size,
            repetition: r.repetition,
            seed: r.seed,
            train_rmse: r.metrics.train_rmse,
            val_rmse: r.metrics.val_rmse,
            train_r: r.metrics.train_r,
            val_r: r.metrics.val_r,
            bundle: r.model.as_ref().map(|id| format!("train/models/{id}.json")),
            failure: r.failure.clone(),
        })
        .collect();
    let failed = runs.iter().filter(|r| r.failure.is_some()).count();
    let summary = json!({
        "root_seed": ctx.seed(),
        "lineage": space.lineage(),
        "models": grid.ensemble.n_models(),
        "failed_runs": failed,
        "ensemble_validation_r": ens_r,
        "aggregates": aggs,
        "runs": runs,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    log::info!(
        "trained {} models ({failed} failed); ensemble validation r {:.3}",
        grid.ensemble.n_models(),
        ens_r.mean
    );
    if grid.ensemble.n_models() == 0 {
        return Err(Error::Numerical("every training run failed".into()));
    }
    ctx.finish("train", &dir, json!({ "runs": runs, "ensemble_validation_r": ens_r }))
}

fn load_ensemble(ctx: &Context, space: &FeatureSpace) -> Result<Ensemble> {
    let models = ctx.layout.models();
    require(&models.join("ensemble.json"), "train")?;
    let e = Ensemble::load(&models)?;
    e.check_lineage(space)?;
    Ok(e)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Agreement {
    pub threshold: f64,
    /// `None` when either kind is missing or no pixel exceeds the threshold.
    pub blup_vs_nn_iou: Option<f64>,
    pub note: Option<String>,
}

pub fn predict(ctx: &Context) -> Result<()> {
    let space = load_space(ctx)?;
    let ensemble = load_ensemble(ctx, &space)?;
    let cube = ctx.load_cube()?;
    let samples_path = ctx.samples_csv();
    require(&samples_path, "synth")?;
    let samples = read_samples_csv(&samples_path)?;
    let dir = ctx.begin("predict")?;

    let maps = predict_map(&ensemble, &space, &cube)?;
    let blup_ids: Vec<String> = ensemble.blup.iter().map(|m| m.id.clone()).collect();
    let nn_ids: Vec<String> = ensemble.nn.iter().map(|m| m.id.clone()).collect();
    if let Some(r) = &maps.blup {
        save_raster(&ctx.layout.css("blup"), r, "css_blup", blup_ids, false)?;
    }
    if let Some(r) = &maps.nn {
        save_raster(&ctx.layout.css("nn"), r, "css_nn", nn_ids, false)?;
    }
    save_raster(&ctx.layout.css("combined"), &maps.combined, "css_combined", maps.provenance.clone(), false)?;

    let x = sample_features(&cube, &space, &samples)?;
    let rows = reclassify(&ensemble, &space, &samples, &x)?;
    write_reclassified_csv(&ctx.layout.reclassified(), &rows)?;
    let means = category_means(&rows);
    write_category_means_csv(&dir.join("category_means.csv"), &means)?;

    let threshold = ctx.config.thresholds.css;
    let agreement = match (&maps.blup, &maps.nn) {
        (Some(a), Some(b)) => match map_agreement_iou(a, b, threshold) {
            Ok(iou) => Agreement {
                threshold,
                blup_vs_nn_iou: Some(iou),
                note: None,
            },
            Err(Error::EmptyUnion) => Agreement {
                threshold,
                blup_vs_nn_iou: None,
                note: Some("no pixel exceeds the threshold in either map".into()),
            },
            Err(e) => return Err(e),
        },
        _ => Agreement {
            threshold,
            blup_vs_nn_iou: None,
            note: Some("ensemble lacks one model kind".into()),
        },
    };
    write_json(&dir.join("agreement.json"), &agreement)?;
    ctx.finish("predict", &dir, json!({ "category_means": means, "agreement": agreement }))
}

pub fn write_category_means_csv(path: &Path, means: &[CategoryMeans]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["category", "n", "blup", "nn", "combined"])
        .map_err(|e| Error::csv(path, e))?;
    for m in means {
        w.write_record([
            m.category.to_string(),
            m.n.to_string(),
            m.blup.to_string(),
            m.nn.to_string(),
            m.combined.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn calibrate(ctx: &Context) -> Result<()> {
    let path = ctx.layout.reclassified();
    require(&path, "predict")?;
    let rows = read_reclassified_csv(&path)?;
    let dir = ctx.begin("calibrate")?;
    let scores: Vec<f64> = rows.iter().map(|r| r.combined).collect();
    let ndvi: Vec<f64> = rows.iter().map(|r| r.ndvi).collect();
    let cats: Vec<_> = rows.iter().map(|r| r.category).collect();
    let cal = fit_calibration(&scores, &ndvi, &cats)?;
    let cal_out = ctx.layout.calibration();
    write_json(&cal_out, &cal)?;
    log::info!("NDVI = {:.4} * CSS + {:.4} (r2 {:.3})", cal.slope, cal.intercept, cal.r2);
    ctx.finish("calibrate", &dir, serde_json::to_value(cal).map_err(|e| Error::json(&cal_out, e))?)
}

pub fn opportunity(ctx: &Context) -> Result<()> {
    let css = require_raster(&ctx.layout.css("combined"), "predict")?;
    let ndvi = require_raster(&ctx.layout.summer_ndvi(), "features")?;
    let cal_path = ctx.layout.calibration();
    require(&cal_path, "calibrate")?;
    let cal: Calibration = read_json(&cal_path)?;
    let dir = ctx.begin("opportunity")?;
    let diff = opportunity_map(&css, &ndvi, &cal)?;
    let positive = diff.values.iter().filter(|v| **v > 0.0).count();
    save_raster(&ctx.layout.difference(), &diff, "difference", vec!["css_combined".into(), "summer_ndvi".into()], false)?;
    ctx.finish("opportunity", &dir, json!({ "positive_pixels": positive }))
}

/// Flags of the `candidates` subcommand; `None` falls back to the config.
#[derive(Debug, Clone, Default)]
pub struct CandidateArgs {
    pub rules: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub count: Option<usize>,
    pub min_spacing_km: Option<f64>,
}

pub fn candidates(ctx: &Context, args: &CandidateArgs) -> Result<()> {
    let diff = require_raster(&ctx.layout.difference(), "opportunity")?;
    let css = require_raster(&ctx.layout.css("combined"), "predict")?;
    let ndvi = require_raster(&ctx.layout.summer_ndvi(), "features")?;
    let rules = match &args.rules {
        Some(p) => RuleSet::load(p)?,
        None => RuleSet::default_rules(),
    };
    let table = args.attributes.as_deref().map(AttributeTable::load).transpose()?;
    let count = args.count.unwrap_or(ctx.config.thresholds.candidate_count);
    let spacing = args.min_spacing_km.unwrap_or(ctx.config.thresholds.min_spacing_km);
    if count == 0 {
        return Err(Error::InvalidInput("--count must be positive".into()));
    }
    let dir = ctx.begin("candidates")?;

    let mut sites = extract_candidates(&diff, &css, &ndvi, count, spacing)?;
    let report = match &table {
        Some(t) => {
            join_attributes(&mut sites, t, &diff.spec);
            Some(filter_candidates(&mut sites, &rules)?)
        }
        None => None,
    };
    write_candidates_csv(&dir.join("candidates.csv"), &sites)?;
    write_json(&ctx.layout.candidates_json(), &sites)?;
    let screening = json!({
        "count": count,
        "min_spacing_km": spacing,
        "placed": sites.len(),
        "rules": rules.rules.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
        "report": report,
    });
    write_json(&dir.join("screening.json"), &screening)?;
    if let Some(r) = &report {
        log::info!("{} of {} candidates retained", r.retained.len(), sites.len());
    }
    ctx.finish("candidates", &dir, screening)
}

/// Flags of the `analogs` subcommand; `None` falls back to the config.
#[derive(Debug, Clone, Default)]
pub struct AnalogArgs {
    pub exclusion: Option<PathBuf>,
    pub max_climate_dist: Option<f64>,
    pub min_ndvi_margin: Option<f64>,
}

fn exclusion_stem(ctx: &Context, flag: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = flag.or(ctx.config.paths.exclusion.as_deref()) {
        return Some(p.to_path_buf());
    }
    let synth = ctx.layout.stage("synth").join("exclusion");
    synth.with_extension("json").exists().then_some(synth)
}

pub fn analogs(ctx: &Context, args: &AnalogArgs) -> Result<()> {
    let cpath = ctx.layout.candidates_json();
    require(&cpath, "candidates")?;
    let sites: Vec<CandidateSite> = read_json(&cpath)?;
    let ndvi = require_raster(&ctx.layout.summer_ndvi(), "features")?;
    let cube = ctx.load_cube()?;
    let exclusion = match exclusion_stem(ctx, args.exclusion.as_deref()) {
        Some(stem) => Some(require_raster(&stem, "synth")?),
        None => None,
    };
    let a = &ctx.config.analogs;
    let mut params = a.params();
    if args.max_climate_dist.is_some() {
        params.max_climate_dist = args.max_climate_dist;
    }
    if let Some(m) = args.min_ndvi_margin {
        params.min_ndvi_margin = m;
    }
    let space = match a.distance_mode {
        DistanceMode::RankedNormalized => Some(load_space(ctx)?),
        DistanceMode::LowestRaw => None,
    };
    let dir = ctx.begin("analogs")?;

    // Screened runs search from retained sites only.
    let screened = sites.iter().any(|s| s.retained.is_some());
    let chosen: Vec<&CandidateSite> = sites.iter().filter(|s| !screened || s.retained == Some(true)).collect();
    let vars = cube.variables().to_vec();
    let vectors = distance_vectors(&cube, &vars, a.distance_mode, a.channels, space.as_ref())?;
    let pixels: Vec<usize> = chosen.iter().map(|s| s.pixel).collect();
    let outcomes = find_analogs(&pixels, cube.spec(), &vectors, &ndvi, exclusion.as_ref(), &params)?;

    let mut matches = Vec::new();
    for (s, o) in chosen.iter().zip(&outcomes) {
        if let AnalogOutcome::Found(m) = o {
            matches.push((s.rank, m.clone()));
        } else {
            log::warn!("candidate {} has no analog: {o:?}", s.rank);
        }
    }
    write_matches_csv(&dir.join("matches.csv"), &matches)?;
    let labeled: Vec<_> = chosen.iter().map(|s| s.rank).zip(&outcomes).collect();
    write_json(&dir.join("outcomes.json"), &labeled)?;
    let uplift = if matches.is_empty() {
        None
    } else {
        let pairs: Vec<(f64, f64)> = matches.iter().map(|(_, m)| (m.candidate_ndvi, m.analog_ndvi)).collect();
        Some(uplift_report(&pairs)?)
    };
    write_json(&dir.join("uplift.json"), &uplift)?;

    if let Some(first) = chosen.first() {
        let spec = *cube.spec();
        let origin = vectors[first.pixel].as_ref();
        let mut values = vec![f32::NAN; spec.n_pixels()];
        if let Some(o) = origin {
            for (p, v) in vectors.iter().enumerate() {
                if let Some(v) = v {
                    values[p] = climate_distance(o, v)? as f32;
                }
            }
        }
        let map = Raster::new(spec, values)?;
        save_raster(&ctx.layout.climate_distance(), &map, "climate_distance", vec![format!("candidate {}", first.rank)], false)?;
    }
    ctx.finish(
        "analogs",
        &dir,
        json!({ "searched": chosen.len(), "found": matches.len(), "uplift": uplift }),
    )
}

pub fn report(ctx: &Context) -> Result<()> {
    let summary_path = ctx.layout.stage("train").join("summary.json");
    require(&summary_path, "train")?;
    let summary: serde_json::Value = read_json(&summary_path)?;
    let aggs: Vec<Aggregate> = serde_json::from_value(summary["aggregates"].clone()).map_err(|e| Error::json(&summary_path, e))?;
    let css = require_raster(&ctx.layout.css("combined"), "predict")?;
    let dir = ctx.begin("report")?;

    let table = dir.join("metrics_table.txt");
    let mut buf = Vec::new();
    write_aggregates_table(&mut buf, &aggs).map_err(|e| Error::io(&table, e))?;
    fs::write(&table, &buf).map_err(|e| Error::io(&table, e))?;
    write_aggregates_csv(&dir.join("aggregates.csv"), &aggs)?;
    let rows = read_reclassified_csv(&ctx.layout.reclassified())?;
    write_category_means_csv(&dir.join("category_means.csv"), &category_means(&rows))?;

    let mut maps = vec![("css_combined", Some(css))];
    let optional = [
        ("css_blup", ctx.layout.css("blup")),
        ("css_nn", ctx.layout.css("nn")),
        ("summer_ndvi", ctx.layout.summer_ndvi()),
        ("difference", ctx.layout.difference()),
        ("climate_distance", ctx.layout.climate_distance()),
    ];
    for (name, stem) in optional {
        let r = if stem.with_extension("json").exists() {
            Some(load_raster(&stem)?.0)
        } else {
            log::info!("{} not found; heatmap skipped", stem.display());
            None
        };
        maps.push((name, r));
    }
    let mut scales = serde_json::Map::new();
    for (name, r) in maps.iter().filter_map(|(n, r)| r.as_ref().map(|r| (n, r))) {
        let scale = write_pgm(&dir.join(format!("{name}.pgm")), r)?;
        scales.insert(name.to_string(), json!(scale));
    }
    write_json(&dir.join("heatmaps.json"), &scales)?;
    let out = std::io::stdout();
    write_aggregates_table(&mut out.lock(), &aggs).map_err(|e| Error::io(Path::new("<stdout>"), e))?;
    ctx.finish("report", &dir, json!({ "heatmaps": scales }))
}
