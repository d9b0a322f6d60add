//! Repeated-holdout training grid.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{BlupMember, CodecMember, Ensemble, ModelKind, NnMember};
use super::metrics::{pearson, rmse};
use super::samples::LabeledSample;
use crate::blup::{choose_lambda, fit_blup, predict_blup, LambdaRule};
use crate::error::{Error, ErrorKind, Result};
use crate::linalg::Matrix;
use crate::neural::{encode, train_autoencoder, train_classifier, Hyperparams, LatentCodec};
use crate::seed::{derive_seed, TAG_AUTOENCODER, TAG_BLUP, TAG_CLASSIFIER, TAG_SPLIT};
use crate::spectral::FeatureSpace;

/// Sample positions of one train/validation partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Holds out `round(fraction * n)` samples chosen uniformly without replacement.
pub fn split_holdout(n: usize, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!("holdout fraction {fraction} outside (0, 1)")));
    }
    let m = (fraction * n as f64).round() as usize;
    if (fraction * n as f64) < 1.0 || m == 0 || m >= n {
        return Err(Error::InvalidInput(format!(
            "holdout fraction {fraction} of {n} samples leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut validation = order[..m].to_vec();
    let mut train = order[m..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, validation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// BLUP input sizes (bins per variable); empty disables BLUP.
    pub blup_sizes: Vec<usize>,
    /// Autoencoder latent sizes; empty disables the networks.
    pub nn_latents: Vec<usize>,
    /// Bins per variable fed to the autoencoders.
    pub nn_input_k: usize,
    pub repetitions: usize,
    pub holdout_fraction: f64,
    pub lambda: LambdaRule,
    pub autoencoder: Hyperparams,
    pub classifier: Hyperparams,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            blup_sizes: vec![1, 2, 4, 8, 16, 32, 64],
            nn_latents: vec![4, 8, 16, 32, 64],
            nn_input_k: 8,
            repetitions: 10,
            holdout_fraction: 0.1,
            lambda: LambdaRule::FeatureCount,
            autoencoder: Hyperparams::default(),
            classifier: Hyperparams::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, space: &FeatureSpace) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidInput("at least one repetition is required".into()));
        }
        if self.blup_sizes.is_empty() && self.nn_latents.is_empty() {
            return Err(Error::InvalidInput("no model sizes configured".into()));
        }
        for &k in self.blup_sizes.iter().chain(self.nn_input_k_if_used()) {
            if k == 0 || k > space.k_max() {
                return Err(Error::InvalidInput(format!(
                    "input size {k} outside 1..={} fitted bins",
                    space.k_max()
                )));
            }
        }
        if self.nn_latents.contains(&0) {
            return Err(Error::InvalidInput("latent size must be positive".into()));
        }
        self.autoencoder.validate()?;
        self.classifier.validate()
    }

    fn nn_input_k_if_used(&self) -> Option<&usize> {
        (!self.nn_latents.is_empty()).then_some(&self.nn_input_k)
    }

    pub fn max_k(&self) -> usize {
        self.blup_sizes.iter().chain(self.nn_input_k_if_used()).copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub train_rmse: f64,
    pub val_rmse: f64,
    /// NaN when either side of the correlation has zero variance.
    pub train_r: f64,
    pub val_r: f64,
}

impl RunMetrics {
    const NAN: RunMetrics = RunMetrics {
        train_rmse: f64::NAN,
        val_rmse: f64::NAN,
        train_r: f64::NAN,
        val_r: f64::NAN,
    };

    pub fn from_predictions(train: (&[f64], &[f64]), val: (&[f64], &[f64])) -> Result<RunMetrics> {
        let r = |p: &[f64], t: &[f64]| match pearson(p, t) {
            Err(Error::ZeroVariance(_)) => Ok(f64::NAN),
            other => other,
        };
        Ok(RunMetrics {
            train_rmse: rmse(train.0, train.1)?,
            val_rmse: rmse(val.0, val.1)?,
            train_r: r(train.0, train.1)?,
            val_r: r(val.0, val.1)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub kind: ModelKind,
    /// BLUP: bins per variable. NN: latent size.
    pub size: usize,
    pub repetition: usize,
    pub seed: u64,
    pub holdout: Vec<u32>,
    pub metrics: RunMetrics,
    /// Bundle id of the trained model; `None` when the run failed.
    pub model: Option<String>,
    /// Failure message of a numerically diverged run.
    pub failure: Option<String>,
}

impl TrainingRun {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// One model's score for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub kind: ModelKind,
    pub size: usize,
    pub repetition: usize,
    pub sample_id: u32,
    pub validation: bool,
    pub label: u8,
    pub prediction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Mean and sample standard deviation of the finite values.
    pub fn of(values: impl IntoIterator<Item = f64>) -> MeanStd {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return MeanStd { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub kind: ModelKind,
    pub size: usize,
    pub runs: usize,
    pub failed: usize,
    pub train_rmse: MeanStd,
    pub val_rmse: MeanStd,
    pub train_r: MeanStd,
    pub val_r: MeanStd,
}

/// Per `(kind, size)` summaries over successful repetitions.
pub fn aggregate_runs(runs: &[TrainingRun]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(ModelKind, usize), Vec<&TrainingRun>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.kind, r.size)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((kind, size), rs)| {
            let ok: Vec<&RunMetrics> = rs.iter().filter(|r| r.succeeded()).map(|r| &r.metrics).collect();
            Aggregate {
                kind,
                size,
                runs: rs.len(),
                failed: rs.len() - ok.len(),
                train_rmse: MeanStd::of(ok.iter().map(|m| m.train_rmse)),
                val_rmse: MeanStd::of(ok.iter().map(|m| m.val_rmse)),
                train_r: MeanStd::of(ok.iter().map(|m| m.train_r)),
                val_r: MeanStd::of(ok.iter().map(|m| m.val_r)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub runs: Vec<TrainingRun>,
    pub predictions: Vec<PredictionRecord>,
    pub ensemble: Ensemble,
}

impl GridResult {
    pub fn aggregates(&self) -> Vec<Aggregate> {
        aggregate_runs(&self.runs)
    }

    /// Pearson r of the all-model mean score on each repetition's holdout,
    /// averaged over repetitions with a defined correlation.
    pub fn ensemble_validation_r(&self) -> MeanStd {
        let mut per_rep: BTreeMap<usize, BTreeMap<u32, (u8, Vec<f64>)>> = BTreeMap::new();
        for p in self.predictions.iter().filter(|p| p.validation) {
            per_rep
                .entry(p.repetition)
                .or_default()
                .entry(p.sample_id)
                .or_insert_with(|| (p.label, Vec::new()))
                .1
                .push(p.prediction);
        }
        MeanStd::of(per_rep.values().map(|samples| {
            let score: Vec<f64> = samples.values().map(|(_, s)| s.iter().sum::<f64>() / s.len() as f64).collect();
            let label: Vec<f64> = samples.values().map(|(l, _)| *l as f64).collect();
            pearson(&score, &label).unwrap_or(f64::NAN)
        }))
    }
}

pub fn blup_id(k: usize, rep: usize) -> String {
    format!("blup-k{k}-r{rep}")
}

pub fn codec_id(latent: usize) -> String {
    format!("ae-l{latent}")
}

pub fn nn_id(latent: usize, rep: usize) -> String {
    format!("nn-l{latent}-r{rep}")
}

enum Trained {
    Blup(BlupMember),
    Nn(NnMember),
    Failed,
}

struct JobOutput {
    run: TrainingRun,
    predictions: Vec<PredictionRecord>,
    model: Trained,
}

fn record(
    kind: ModelKind,
    size: usize,
    rep: usize,
    samples: &[LabeledSample],
    split: &Split,
    scores: &[f64],
) -> Result<(RunMetrics, Vec<PredictionRecord>)> {
    let label = |i: usize| samples[i].label as f64;
    let pick = |idx: &[usize]| -> (Vec<f64>, Vec<f64>) {
        (idx.iter().map(|i| scores[*i]).collect(), idx.iter().map(|i| label(*i)).collect())
    };
    let (tp, tt) = pick(&split.train);
    let (vp, vt) = pick(&split.validation);
    let metrics = RunMetrics::from_predictions((&tp, &tt), (&vp, &vt))?;
    let mut preds = Vec::with_capacity(samples.len());
    let mut in_val = vec![false; samples.len()];
    split.validation.iter().for_each(|i| in_val[*i] = true);
    for (i, s) in samples.iter().enumerate() {
        preds.push(PredictionRecord {
            kind,
            size,
            repetition: rep,
            sample_id: s.id,
            validation: in_val[i],
            label: s.label,
            prediction: scores[i],
        });
    }
    Ok((metrics, preds))
}

/// Numerical failures are recorded on the run; anything else aborts the grid.
fn absorb(result: Result<JobOutput>, base: TrainingRun) -> Result<JobOutput> {
    match result {
        Err(e) if e.kind() == ErrorKind::Numerical => {
            log::warn!(
                "{} size {} repetition {} failed and is excluded: {e}",
                base.kind,
                base.size,
                base.repetition
            );
            Ok(JobOutput {
                run: TrainingRun {
                    failure: Some(e.to_string()),
                    ..base
                },
                predictions: Vec::new(),
                model: Trained::Failed,
            })
        }
        other => other,
    }
}

/// Trains every `(kind, size, repetition)` model on its holdout split.
///
/// `features` holds one `k_max` feature row per sample. Autoencoders are trained
/// once per latent size on all sample features (labels unused); classifiers are
/// trained per repetition on the split. Jobs run on the current rayon pool and
/// results are collected in job order, so output is independent of the pool size.
pub fn run_training_grid(
    samples: &[LabeledSample],
    space: &FeatureSpace,
    features: &Matrix,
    config: &TrainingConfig,
    root_seed: u64,
) -> Result<GridResult> {
    config.validate(space)?;
    if features.rows() != samples.len() || features.cols() != space.dim(space.k_max()) {
        return Err(Error::DimensionMismatch(format!(
            "feature matrix is {}x{}, expected {}x{}",
            features.rows(),
            features.cols(),
            samples.len(),
            space.dim(space.k_max())
        )));
    }
    let project = |k: usize| -> Result<Matrix> {
        let rows = (0..features.rows())
            .map(|r| space.project(features.row(r), k))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    };
    let labels: Vec<f64> = samples.iter().map(|s| s.label as f64).collect();
    let splits = (0..config.repetitions)
        .map(|rep| split_holdout(samples.len(), config.holdout_fraction, derive_seed(root_seed, &[TAG_SPLIT, rep as u64])))
        .collect::<Result<Vec<_>>>()?;
    let holdout_ids = |rep: usize| -> Vec<u32> { splits[rep].validation.iter().map(|i| samples[*i].id).collect() };
    let base = |kind: ModelKind, size: usize, rep: usize, seed: u64| TrainingRun {
        kind,
        size,
        repetition: rep,
        seed,
        holdout: holdout_ids(rep),
        metrics: RunMetrics::NAN,
        model: None,
        failure: None,
    };

    let blup_inputs = config
        .blup_sizes
        .iter()
        .map(|&k| Ok((k, project(k)?)))
        .collect::<Result<Vec<_>>>()?;
    let blup_jobs: Vec<(usize, usize)> = (0..config.blup_sizes.len())
        .flat_map(|s| (0..config.repetitions).map(move |r| (s, r)))
        .collect();
    let blup_out = blup_jobs
        .par_iter()
        .map(|&(s, rep)| {
            let (k, x) = (&blup_inputs[s].0, &blup_inputs[s].1);
            let seed = derive_seed(root_seed, &[TAG_BLUP, *k as u64, rep as u64]);
            let split = &splits[rep];
            let job = || -> Result<JobOutput> {
                let xt = x.select_rows(&split.train);
                let yt: Vec<f64> = split.train.iter().map(|i| labels[*i]).collect();
                let lambda = choose_lambda(&xt, &yt, config.lambda)?;
                let mut model = fit_blup(&xt, &yt, lambda)?;
                model.k = *k;
                model.seed = seed;
                let model = model.quantized();
                let scores = predict_blup(&model, x)?;
                let (metrics, predictions) = record(ModelKind::Blup, *k, rep, samples, split, &scores)?;
                let id = blup_id(*k, rep);
                Ok(JobOutput {
                    run: TrainingRun {
                        metrics,
                        model: Some(id.clone()),
                        ..base(ModelKind::Blup, *k, rep, seed)
                    },
                    predictions,
                    model: Trained::Blup(BlupMember {
                        id,
                        repetition: rep,
                        model,
                    }),
                })
            };
            absorb(job(), base(ModelKind::Blup, *k, rep, seed))
        })
        .collect::<Vec<_>>();

    let mut codecs: Vec<CodecMember> = Vec::new();
    let mut nn_out = Vec::new();
    if !config.nn_latents.is_empty() {
        let x_nn = project(config.nn_input_k)?;
        let trained: Vec<(usize, u64, Result<LatentCodec>)> = config
            .nn_latents
            .par_iter()
            .map(|&latent| {
                let seed = derive_seed(root_seed, &[TAG_AUTOENCODER, latent as u64]);
                (latent, seed, train_autoencoder(&x_nn, space.n_variables(), latent, &config.autoencoder, seed))
            })
            .collect();
        let mut codec_slot: Vec<std::result::Result<(usize, Matrix), String>> = Vec::new();
        for (latent, seed, result) in trained {
            match result {
                Ok(codec) => {
                    let z = encode(&codec, &x_nn)?;
                    codec_slot.push(Ok((codecs.len(), z)));
                    codecs.push(CodecMember {
                        id: codec_id(latent),
                        seed,
                        codec,
                    });
                }
                Err(e) if e.kind() == ErrorKind::Numerical => {
                    log::warn!("autoencoder with latent size {latent} failed: {e}");
                    codec_slot.push(Err(e.to_string()));
                }
                Err(e) => return Err(e),
            }
        }
        let jobs: Vec<(usize, usize)> = (0..config.nn_latents.len())
            .flat_map(|s| (0..config.repetitions).map(move |r| (s, r)))
            .collect();
        nn_out = jobs
            .par_iter()
            .map(|&(s, rep)| {
                let latent = config.nn_latents[s];
                let seed = derive_seed(root_seed, &[TAG_CLASSIFIER, latent as u64, rep as u64]);
                let split = &splits[rep];
                let job = || -> Result<JobOutput> {
                    let (codec, z) = match &codec_slot[s] {
                        Ok(v) => (v.0, &v.1),
                        Err(msg) => return Err(Error::Numerical(format!("autoencoder failed: {msg}"))),
                    };
                    let zt = z.select_rows(&split.train);
                    let yt: Vec<f64> = split.train.iter().map(|i| labels[*i]).collect();
                    let fit = train_classifier(&zt, &yt, &config.classifier, seed)?;
                    let scores = fit.net.predict(z)?.into_vec();
                    if scores.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Numerical("classifier produced non-finite scores".into()));
                    }
                    let (metrics, predictions) = record(ModelKind::Nn, latent, rep, samples, split, &scores)?;
                    let id = nn_id(latent, rep);
                    Ok(JobOutput {
                        run: TrainingRun {
                            metrics,
                            model: Some(id.clone()),
                            ..base(ModelKind::Nn, latent, rep, seed)
                        },
                        predictions,
                        model: Trained::Nn(NnMember {
                            id,
                            latent,
                            repetition: rep,
                            seed,
                            codec,
                            classifier: fit.net,
                            history: fit.history,
                        }),
                    })
                };
                absorb(job(), base(ModelKind::Nn, latent, rep, seed))
            })
            .collect::<Vec<_>>();
    }

    let mut ensemble = Ensemble {
        lineage: space.lineage(),
        variables: space.variables.clone(),
        nn_input_k: config.nn_input_k,
        blup: Vec::new(),
        codecs,
        nn: Vec::new(),
    };
    let mut runs = Vec::new();
    let mut predictions = Vec::new();
    for out in blup_out.into_iter().chain(nn_out) {
        let out = out?;
        runs.push(out.run);
        predictions.extend(out.predictions);
        match out.model {
            Trained::Blup(m) => ensemble.blup.push(m),
            Trained::Nn(m) => ensemble.nn.push(m),
            Trained::Failed => {}
        }
    }
    if ensemble.n_models() == 0 {
        return Err(Error::Numerical("every training run failed".into()));
    }
    Ok(GridResult {
        runs,
        predictions,
        ensemble,
    })
}

pub const METRICS_HEADER: [&str; 7] = ["kind", "size", "repetition", "train_rmse", "val_rmse", "train_r", "val_r"];

fn write_csv_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Shortest text that parses back to the same `f64`; NaN as `NaN`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_metrics_csv(path: &Path, runs: &[TrainingRun]) -> Result<()> {
    write_csv_rows(
        path,
        &METRICS_HEADER,
        runs.iter().map(|r| {
            vec![
                r.kind.to_string(),
                r.size.to_string(),
                r.repetition.to_string(),
                fmt_f64(r.metrics.train_rmse),
                fmt_f64(r.metrics.val_rmse),
                fmt_f64(r.metrics.train_r),
                fmt_f64(r.metrics.val_r),
            ]
        }),
    )
}

pub fn write_predictions_csv(path: &Path, preds: &[PredictionRecord]) -> Result<()> {
    write_csv_rows(
        path,
        &["kind", "size", "repetition", "sample_id", "split", "label", "prediction"],
        preds.iter().map(|p| {
            vec![
                p.kind.to_string(),
                p.size.to_string(),
                p.repetition.to_string(),
                p.sample_id.to_string(),
                if p.validation { "validation" } else { "train" }.to_string(),
                p.label.to_string(),
                fmt_f64(p.prediction),
            ]
        }),
    )
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |what: &str| Error::Metadata(format!("{}: row {}: bad {what}", path.display(), line + 2));
        let get = |i: usize| rec.get(i).ok_or_else(|| bad("column count"));
        out.push(PredictionRecord {
            kind: get(0)?.parse()?,
            size: get(1)?.parse().map_err(|_| bad("size"))?,
            repetition: get(2)?.parse().map_err(|_| bad("repetition"))?,
            sample_id: get(3)?.parse().map_err(|_| bad("sample_id"))?,
            validation: match get(4)? {
                "validation" => true,
                "train" => false,
                _ => return Err(bad("split")),
            },
            label: get(5)?.parse().map_err(|_| bad("label"))?,
            prediction: get(6)?.parse().map_err(|_| bad("prediction"))?,
        });
    }
    Ok(out)
}

/// Recomputes run metrics from prediction records, in run order.
pub fn metrics_from_predictions(runs: &[TrainingRun], preds: &[PredictionRecord]) -> Result<Vec<RunMetrics>> {
    runs.iter()
        .map(|run| {
            if !run.succeeded() {
                return Ok(RunMetrics::NAN);
            }
            let mine = preds
                .iter()
                .filter(|p| p.kind == run.kind && p.size == run.size && p.repetition == run.repetition);
            let (mut tp, mut tt, mut vp, mut vt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for p in mine {
                let (ps, ts) = if p.validation { (&mut vp, &mut vt) } else { (&mut tp, &mut tt) };
                ps.push(p.prediction);
                ts.push(p.label as f64);
            }
            RunMetrics::from_predictions((&tp, &tt), (&vp, &vt))
        })
        .collect()
}

/// Writes aggregates as CSV with mean and std columns per metric.
pub fn write_aggregates_csv(path: &Path, aggs: &[Aggregate]) -> Result<()> {
    const HEADER: [&str; 12] = [
        "kind",
        "size",
        "runs",
        "failed",
        "train_rmse_mean",
        "train_rmse_std",
        "val_rmse_mean",
        "val_rmse_std",
        "train_r_mean",
        "train_r_std",
        "val_r_mean",
        "val_r_std",
    ];
    write_csv_rows(
        path,
        &HEADER,
        aggs.iter().map(|a| {
            let mut row = vec![a.kind.to_string(), a.size.to_string(), a.runs.to_string(), a.failed.to_string()];
            for m in [&a.train_rmse, &a.val_rmse, &a.train_r, &a.val_r] {
                row.push(fmt_f64(m.mean));
                row.push(fmt_f64(m.std));
            }
            row
        }),
    )
}

/// Writes the aggregates as an aligned text table.
pub fn write_aggregates_table(out: &mut impl Write, aggs: &[Aggregate]) -> std::io::Result<()> {
    writeln!(out, "{:<5} {:>5} {:>5} {:>17} {:>17}", "kind", "size", "ok", "val_rmse", "val_r")?;
    for a in aggs {
        writeln!(
            out,
            "{:<5} {:>5} {:>5} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4}",
            a.kind.as_str(),
            a.size,
            a.runs - a.failed,
            a.val_rmse.mean,
            a.val_rmse.std,
            a.val_r.mean,
            a.val_r.std
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_sizes_and_partition() {
        let s = split_holdout(230, 0.1, 42).unwrap();
        assert_eq!(s.validation.len(), 23);
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..230).collect::<Vec<_>>());
        assert_eq!(split_holdout(230, 0.1, 42).unwrap(), s);
        assert_ne!(split_holdout(230, 0.1, 43).unwrap(), s);
        assert!(split_holdout(5, 0.1, 1).is_err());
        assert!(split_holdout(10, 1.0, 1).is_err());
    }

    #[test]
    fn mean_std_skips_nan() {
        let m = MeanStd::of([1.0, f64::NAN, 3.0]);
        assert_eq!((m.mean, m.n), (2.0, 2));
        assert!((m.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(MeanStd::of([5.0]).std, 0.0);
        assert!(MeanStd::of([]).mean.is_nan());
    }

    #[test]
    fn failed_runs_leave_aggregates() {
        let run = |rep: usize, val_r: f64, failure: Option<String>| TrainingRun {
            kind: ModelKind::Blup,
            size: 2,
            repetition: rep,
            seed: 0,
            holdout: vec![],
            metrics: RunMetrics {
                train_rmse: 0.1,
                val_rmse: 0.2,
                train_r: 0.9,
                val_r,
            },
            model: None,
            failure,
        };
        let aggs = aggregate_runs(&[run(0, 0.5, None), run(1, 0.7, None), run(2, -5.0, Some("diverged".into()))]);
        assert_eq!(aggs.len(), 1);
        assert_eq!(aggs[0].failed, 1);
        assert!((aggs[0].val_r.mean - 0.6).abs() < 1e-15);
    }

    #[test]
    fn float_text_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert!(fmt_f64(f64::NAN).parse::<f64>().unwrap().is_nan());
    }
}
