use std::collections::BTreeSet;
use std::sync::OnceLock;

use drycss_core::blup::LambdaRule;
use drycss_core::grid::synth::{SampleCounts, SynthConfig, SynthScenario};
use drycss_core::neural::Hyperparams;
use drycss_core::pipeline::calibration::fit_calibration;
use drycss_core::pipeline::mapping::{fit_feature_space, predict_map, sample_features};
use drycss_core::pipeline::metrics::{map_agreement_iou, ranking_overlap};
use drycss_core::pipeline::training::{
    metrics_from_predictions, read_predictions_csv, run_training_grid, write_predictions_csv, GridResult,
    TrainingConfig,
};
use drycss_core::spectral::{FeatureSpace, RankingRule};
use drycss_core::{Category, GridSpec, Matrix, Raster, TimeAxis};
use proptest::prelude::*;

struct Fixture {
    scenario: SynthScenario,
    space: FeatureSpace,
    features: Matrix,
    grid: GridResult,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let config = SynthConfig {
            grid: GridSpec::with_step(18.0, 40.0, 0.1, 16, 16).unwrap(),
            time: TimeAxis::new(TimeAxis::desk_default().start, 12, 730).unwrap(),
            counts: SampleCounts {
                hi_suit_hi_veg: 20,
                lo_suit_lo_veg: 20,
                lo_suit_hi_veg: 4,
                hi_suit_lo_veg: 4,
            },
            ..SynthConfig::desk(5)
        };
        let scenario = SynthScenario::generate(&config).unwrap();
        let vars = scenario.cube.variables().to_vec();
        let space = fit_feature_space(&scenario.cube, &vars, &scenario.samples, 8, RankingRule::default()).unwrap();
        let features = sample_features(&scenario.cube, &space, &scenario.samples).unwrap();
        let hp = Hyperparams {
            epochs: 10,
            ..Hyperparams::default()
        };
        let training = TrainingConfig {
            blup_sizes: vec![2, 8],
            nn_latents: vec![4],
            nn_input_k: 2,
            repetitions: 2,
            lambda: LambdaRule::FeatureCount,
            autoencoder: hp.clone(),
            classifier: hp,
            ..TrainingConfig::default()
        };
        let grid = run_training_grid(&scenario.samples, &space, &features, &training, 3).unwrap();
        Fixture {
            scenario,
            space,
            features,
            grid,
        }
    })
}

fn f32_bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn stored_metrics_match_serialized_predictions() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("predictions.csv");
    write_predictions_csv(&path, &f.grid.predictions).unwrap();
    let back = read_predictions_csv(&path).unwrap();
    let recomputed = metrics_from_predictions(&f.grid.runs, &back).unwrap();
    for (run, m) in f.grid.runs.iter().zip(&recomputed) {
        let a = [run.metrics.train_rmse, run.metrics.val_rmse, run.metrics.train_r, run.metrics.val_r];
        let b = [m.train_rmse, m.val_rmse, m.train_r, m.val_r];
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits), "{} {} rep {}", run.kind, run.size, run.repetition);
    }
}

#[test]
fn map_is_independent_of_worker_count() {
    let f = fixture();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| predict_map(&f.grid.ensemble, &f.space, &f.scenario.cube).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(f32_bits(&a.combined.values), f32_bits(&b.combined.values));
    assert_eq!(f32_bits(&a.blup.unwrap().values), f32_bits(&b.blup.unwrap().values));
    assert_eq!(f32_bits(&a.nn.unwrap().values), f32_bits(&b.nn.unwrap().values));
}

#[test]
fn constant_model_offset_shifts_scores_and_keeps_ranking() {
    let f = fixture();
    let c = 0.375;
    let mut shifted = f.grid.ensemble.clone();
    for m in &mut shifted.blup {
        m.model.intercept += c;
    }
    for m in &mut shifted.nn {
        let last = m.classifier.layers.last_mut().unwrap();
        last.bias[0] += c;
    }
    let a = f.grid.ensemble.score(&f.space, &f.features).unwrap();
    let b = shifted.score(&f.space, &f.features).unwrap();
    for (x, y) in a.combined.iter().zip(&b.combined) {
        assert!((y - x - c).abs() < 1e-12, "{x} -> {y}");
    }
    for i in 0..a.combined.len() {
        for j in 0..a.combined.len() {
            if a.combined[i] - a.combined[j] > 1e-9 {
                assert!(b.combined[i] > b.combined[j]);
            }
        }
    }
}

#[test]
fn calibration_absorbs_affine_score_changes() {
    let f = fixture();
    let scores: Vec<f64> = f.grid.ensemble.score(&f.space, &f.features).unwrap().combined;
    let ndvi: Vec<f64> = f.scenario.samples.iter().map(|s| s.ndvi).collect();
    let cats: Vec<Category> = f.scenario.samples.iter().map(|s| s.category).collect();
    let base = fit_calibration(&scores, &ndvi, &cats).unwrap();
    for (a, b) in [(2.5, -0.4), (-0.7, 3.0), (1e-3, 10.0)] {
        let moved: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let cal = fit_calibration(&moved, &ndvi, &cats).unwrap();
        for (s, m) in scores.iter().zip(&moved) {
            assert!((base.apply(*s) - cal.apply(*m)).abs() < 1e-9);
        }
        assert!((base.r2 - cal.r2).abs() < 1e-9);
    }
}

fn raster_pair() -> impl Strategy<Value = (Raster, Raster)> {
    let cell = prop_oneof![4 => 0.0f32..1.0, 1 => Just(f32::NAN)];
    (proptest::collection::vec(cell.clone(), 12), proptest::collection::vec(cell, 12)).prop_map(|(a, b)| {
        let spec = GridSpec::with_step(0.0, 0.0, 1.0, 3, 4).unwrap();
        (Raster::new(spec, a).unwrap(), Raster::new(spec, b).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn iou_is_symmetric_and_one_only_for_equal_masks((a, b) in raster_pair(), t in 0.1f64..0.9) {
        let ab = map_agreement_iou(&a, &b, t);
        let ba = map_agreement_iou(&b, &a, t);
        match (ab, ba) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x, y);
                prop_assert!((0.0..=1.0).contains(&x));
                let same = a.values.iter().zip(&b.values)
                    .filter(|(x, y)| !x.is_nan() && !y.is_nan())
                    .all(|(x, y)| (*x as f64 > t) == (*y as f64 > t));
                prop_assert_eq!(x == 1.0, same);
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "asymmetric outcome {:?}", other),
        }
    }

    #[test]
    fn ranking_overlap_matches_set_arithmetic(
        scores in proptest::collection::vec(proptest::collection::vec(0u8..6, 10), 1..4),
        n in 1usize..10,
    ) {
        let rankings: Vec<(String, Vec<(u32, f64)>)> = scores
            .iter()
            .enumerate()
            .map(|(m, s)| (format!("m{m}"), s.iter().enumerate().map(|(id, v)| (id as u32, *v as f64)).collect()))
            .collect();
        let got = ranking_overlap(&rankings, n).unwrap();
        for descending in [true, false] {
            // top or bottom n ids of each ranking, ties to the smaller id
            let sets: Vec<BTreeSet<u32>> = rankings
                .iter()
                .map(|(_, s)| {
                    let mut ids: Vec<u32> = (0..s.len() as u32).collect();
                    ids.sort_by_key(|id| {
                        let v = s[*id as usize].1 as i64;
                        (if descending { -v } else { v }, *id)
                    });
                    ids[..n].iter().copied().collect()
                })
                .collect();
            let side = if descending { &got.top } else { &got.bottom };
            prop_assert_eq!(side.len(), (1 << rankings.len()) - 1);
            for entry in side {
                let inside: Vec<usize> = entry.members.iter().map(|m| m[1..].parse().unwrap()).collect();
                let expected = (0..10u32)
                    .filter(|id| (0..rankings.len()).all(|r| sets[r].contains(id) == inside.contains(&r)))
                    .count();
                prop_assert_eq!(entry.count, expected, "{:?}", entry.members);
            }
        }
    }
}
