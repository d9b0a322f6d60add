use drycss_core::grid::synth::synth_cube;
use drycss_core::grid::{load_cube, regrid_ndvi, save_cube, summer_ndvi_mean, NdviObservation};
use drycss_core::{ClimateCube, GridSpec, NdviRaster, Raster, TimeAxis};
use proptest::prelude::*;

fn small_cube(n_lat: usize, n_lon: usize, n_steps: usize, n_vars: usize, seed: u64, masked: &[usize]) -> ClimateCube {
    let spec = GridSpec::with_step(10.0, 30.0, 0.25, n_lat, n_lon).unwrap();
    let time = TimeAxis::new("2000-01-01T00:00:00Z", 6, n_steps).unwrap();
    let names: Vec<String> = (0..n_vars).map(|v| format!("v{v}")).collect();
    let units = vec!["1".to_string(); n_vars];
    let n_pix = spec.n_pixels();
    let mut state = seed | 1;
    let values: Vec<Vec<f32>> = (0..n_vars)
        .map(|_| {
            (0..n_steps * n_pix)
                .map(|i| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    let p = i % n_pix;
                    if masked.contains(&p) {
                        f32::NAN
                    } else {
                        // arbitrary bit patterns of finite floats
                        (state >> 40) as f32 * 1e-3 - 8000.0
                    }
                })
                .collect()
        })
        .collect();
    ClimateCube::new(spec, time, names, units, values).unwrap()
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cube_round_trip_preserves_every_bit(
        n_lat in 2usize..5, n_lon in 2usize..5, n_steps in 1usize..9, n_vars in 1usize..4,
        seed in any::<u64>(), mask in proptest::collection::vec(0usize..4, 0..3),
    ) {
        let cube = small_cube(n_lat, n_lon, n_steps, n_vars, seed, &mask);
        let dir = tempfile::tempdir().unwrap();
        save_cube(&cube, dir.path(), false).unwrap();
        let back = load_cube(dir.path()).unwrap();
        prop_assert_eq!(back.spec(), cube.spec());
        prop_assert_eq!(back.time(), cube.time());
        prop_assert_eq!(back.variables(), cube.variables());
        prop_assert_eq!(back.validity(), cube.validity());
        for v in 0..n_vars {
            prop_assert_eq!(bits(back.values(v)), bits(cube.values(v)));
        }
    }

    #[test]
    fn extracted_series_have_full_length_and_no_gaps(
        n_steps in 1usize..12, seed in any::<u64>(), fi in 0.0f64..1.0, fj in 0.0f64..1.0,
    ) {
        let cube = small_cube(4, 3, n_steps, 2, seed, &[0]);
        let spec = *cube.spec();
        let lat = spec.lat_min + fi * (spec.lat_max - spec.lat_min);
        let lon = spec.lon_min + fj * (spec.lon_max - spec.lon_min);
        match cube.extract_series(lat, lon) {
            Ok(s) => {
                prop_assert!(cube.is_valid(s.pixel));
                prop_assert_eq!(s.series.len(), 2);
                for series in &s.series {
                    prop_assert_eq!(series.len(), n_steps);
                    prop_assert!(series.iter().all(|v| !v.is_nan()));
                }
            }
            Err(_) => {
                let (i, j) = spec.nearest(lat, lon).unwrap();
                prop_assert!(!cube.is_valid(spec.index(i, j)));
            }
        }
    }

    #[test]
    fn summer_mean_ignores_order_and_off_season_scenes(
        values in proptest::collection::vec(-0.9f32..0.9, 1..8),
        off_season in proptest::collection::vec((1u16..80, -1.0f32..1.0), 0..4),
        rotate in 0usize..8,
    ) {
        let spec = GridSpec::with_step(0.0, 0.0, 1.0, 2, 2).unwrap();
        let scene = |doy: u16, v: f32| NdviObservation { year: 2021, doy, values: vec![v; 4] };
        let mut obs: Vec<NdviObservation> = values.iter().enumerate().map(|(i, v)| scene(100 + i as u16, *v)).collect();
        let base = summer_ndvi_mean(&NdviRaster::new(spec, obs.clone()).unwrap(), &[2021]).unwrap();
        for (doy, v) in &off_season {
            obs.push(scene(*doy, *v));
            obs.push(scene(257 + doy, *v));
        }
        let k = rotate % obs.len();
        obs.rotate_left(k);
        let shuffled = summer_ndvi_mean(&NdviRaster::new(spec, obs).unwrap(), &[2021]).unwrap();
        prop_assert_eq!(bits(&base.values), bits(&shuffled.values));
    }

    #[test]
    fn regrid_over_exact_partition_keeps_global_mean(
        r in 2usize..4, nt in 2usize..5, values in proptest::collection::vec(-1.0f32..1.0, 256),
    ) {
        let s = 0.05;
        let ts = r as f64 * s;
        let target = GridSpec::with_step(20.0, 40.0, ts, nt, nt).unwrap();
        // source nodes sit strictly inside target cells, r per axis
        let n = r * nt;
        let source_spec = GridSpec::with_step(20.0 - ts / 2.0 + s / 2.0, 40.0 - ts / 2.0 + s / 2.0, s, n, n).unwrap();
        let src = Raster::new(source_spec, values[..n * n].to_vec()).unwrap();
        let out = regrid_ndvi(&src, &target).unwrap();
        prop_assert_eq!(out.n_valid(), nt * nt);
        let (a, b) = (src.mean().unwrap(), out.mean().unwrap());
        prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-3), "{} vs {}", a, b);
    }

    #[test]
    fn synthetic_cube_is_a_function_of_its_inputs(seed in any::<u64>()) {
        let spec = GridSpec::with_step(18.0, 40.0, 0.1, 3, 3).unwrap();
        let time = TimeAxis::new("2020-01-01T00:00:00Z", 24, 20).unwrap();
        let (a, sa) = synth_cube(&spec, &time, seed).unwrap();
        let (b, sb) = synth_cube(&spec, &time, seed).unwrap();
        prop_assert_eq!(bits(&sa.values), bits(&sb.values));
        for v in 0..a.n_variables() {
            prop_assert_eq!(bits(a.values(v)), bits(b.values(v)));
        }
    }
}
