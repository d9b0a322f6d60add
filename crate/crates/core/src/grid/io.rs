use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClimateCube, GridSpec, NdviObservation, NdviRaster, Raster, TimeAxis};
use crate::binio::{prepare_dir, prepare_file, read_f32_le, read_json, write_f32_le, write_json};
use crate::error::{Error, Result};

pub const CUBE_FORMAT: &str = "drycss-cube";
pub const NDVI_FORMAT: &str = "drycss-ndvi";
pub const RASTER_FORMAT: &str = "drycss-raster";
const VERSION: u32 = 1;
const CUBE_LAYOUT: &str = "time,lat,lon";
const DTYPE: &str = "float32-le";

#[derive(Debug, Serialize, Deserialize)]
struct CubeMeta {
    format: String,
    version: u32,
    grid: GridSpec,
    time: TimeAxis,
    variables: Vec<VariableMeta>,
    layout: String,
    dtype: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct VariableMeta {
    code: String,
    #[serde(default)]
    unit: String,
}

fn check_header(format: &str, version: u32, dtype: &str, expected: &str, path: &Path) -> Result<()> {
    if format != expected {
        return Err(Error::Metadata(format!(
            "{}: format {format:?}, expected {expected:?}",
            path.display()
        )));
    }
    if version != VERSION {
        return Err(Error::Metadata(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    if dtype != DTYPE {
        return Err(Error::Metadata(format!(
            "{}: dtype {dtype:?}, expected {DTYPE:?}",
            path.display()
        )));
    }
    Ok(())
}

/// Writes `meta.json` plus one `<var>.f32` per variable.
pub fn save_cube(cube: &ClimateCube, dir: &Path, force: bool) -> Result<()> {
    if cube.variables().is_empty() {
        return Err(Error::Metadata("refusing to save a cube without variables".into()));
    }
    prepare_dir(dir, force)?;
    let meta = CubeMeta {
        format: CUBE_FORMAT.into(),
        version: VERSION,
        grid: *cube.spec(),
        time: cube.time().clone(),
        variables: cube
            .variables()
            .iter()
            .zip(cube.units())
            .map(|(c, u)| VariableMeta {
                code: c.clone(),
                unit: u.clone(),
            })
            .collect(),
        layout: CUBE_LAYOUT.into(),
        dtype: DTYPE.into(),
    };
    for (v, code) in cube.variables().iter().enumerate() {
        write_f32_le(&dir.join(format!("{code}.f32")), cube.values(v))?;
    }
    // meta last: a directory with meta.json is complete
    write_json(&dir.join("meta.json"), &meta)
}

pub fn load_cube(dir: &Path) -> Result<ClimateCube> {
    let meta_path = dir.join("meta.json");
    let meta: CubeMeta = read_json(&meta_path)?;
    check_header(&meta.format, meta.version, &meta.dtype, CUBE_FORMAT, &meta_path)?;
    if meta.layout != CUBE_LAYOUT {
        return Err(Error::Metadata(format!(
            "{}: layout {:?}, expected {CUBE_LAYOUT:?}",
            meta_path.display(),
            meta.layout
        )));
    }
    meta.grid.validate()?;
    meta.time.validate()?;
    let expected = meta.time.n_steps * meta.grid.n_pixels();
    let mut values = Vec::with_capacity(meta.variables.len());
    for var in &meta.variables {
        let path = dir.join(format!("{}.f32", var.code));
        if !path.is_file() {
            return Err(Error::MissingVariable(var.code.clone()));
        }
        let arr = read_f32_le(&path)?;
        if arr.len() != expected {
            return Err(Error::LengthMismatch {
                variable: var.code.clone(),
                expected,
                found: arr.len(),
            });
        }
        values.push(arr);
    }
    let (variables, units) = meta
        .variables
        .into_iter()
        .map(|v| (v.code, v.unit))
        .unzip();
    ClimateCube::new(meta.grid, meta.time, variables, units, values)
}

#[derive(Debug, Serialize, Deserialize)]
struct NdviMeta {
    format: String,
    version: u32,
    grid: GridSpec,
    dtype: String,
    #[serde(default)]
    observations: Option<Vec<ObsKey>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ObsKey {
    year: i32,
    doy: u16,
}

fn ndvi_file(dir: &Path, year: i32, doy: u16) -> PathBuf {
    dir.join(format!("{year}_{doy:03}.f32"))
}

/// Writes `meta.json` plus one `<year>_<doy>.f32` grid per observation.
pub fn save_ndvi(raster: &NdviRaster, dir: &Path, force: bool) -> Result<()> {
    prepare_dir(dir, force)?;
    for obs in raster.observations() {
        write_f32_le(&ndvi_file(dir, obs.year, obs.doy), &obs.values)?;
    }
    let meta = NdviMeta {
        format: NDVI_FORMAT.into(),
        version: VERSION,
        grid: *raster.spec(),
        dtype: DTYPE.into(),
        observations: Some(
            raster
                .observations()
                .iter()
                .map(|o| ObsKey {
                    year: o.year,
                    doy: o.doy,
                })
                .collect(),
        ),
    };
    write_json(&dir.join("meta.json"), &meta)
}

/// Loads an NDVI directory. Without an observation list in `meta.json`, every
/// `<year>_<doy>.f32` file in the directory is read in (year, doy) order.
pub fn load_ndvi(dir: &Path) -> Result<NdviRaster> {
    let meta_path = dir.join("meta.json");
    let meta: NdviMeta = read_json(&meta_path)?;
    check_header(&meta.format, meta.version, &meta.dtype, NDVI_FORMAT, &meta_path)?;
    meta.grid.validate()?;
    let keys = match meta.observations {
        Some(keys) => keys,
        None => scan_ndvi_dir(dir)?,
    };
    let npix = meta.grid.n_pixels();
    let mut observations = Vec::with_capacity(keys.len());
    for key in keys {
        let path = ndvi_file(dir, key.year, key.doy);
        if !path.is_file() {
            return Err(Error::Metadata(format!(
                "missing ndvi observation {}",
                path.display()
            )));
        }
        let values = read_f32_le(&path)?;
        if values.len() != npix {
            return Err(Error::LengthMismatch {
                variable: format!("ndvi {}_{:03}", key.year, key.doy),
                expected: npix,
                found: values.len(),
            });
        }
        observations.push(NdviObservation {
            year: key.year,
            doy: key.doy,
            values,
        });
    }
    NdviRaster::new(meta.grid, observations)
}

fn scan_ndvi_dir(dir: &Path) -> Result<Vec<ObsKey>> {
    let mut keys = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".f32")) else {
            continue;
        };
        let Some((y, d)) = stem.split_once('_') else {
            continue;
        };
        if let (Ok(year), Ok(doy)) = (y.parse(), d.parse()) {
            keys.push(ObsKey { year, doy });
        }
    }
    keys.sort_by_key(|k| (k.year, k.doy));
    Ok(keys)
}

/// Side-car document of a single-layer raster (`<stem>.json` next to `<stem>.f32`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMeta {
    pub format: String,
    pub version: u32,
    pub grid: GridSpec,
    pub dtype: String,
    pub name: String,
    #[serde(default)]
    pub provenance: Vec<String>,
}

impl RasterMeta {
    pub fn new(grid: GridSpec, name: impl Into<String>, provenance: Vec<String>) -> Self {
        RasterMeta {
            format: RASTER_FORMAT.into(),
            version: VERSION,
            grid,
            dtype: DTYPE.into(),
            name: name.into(),
            provenance,
        }
    }
}

fn raster_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("f32"))
}

pub fn save_raster(stem: &Path, raster: &Raster, name: &str, provenance: Vec<String>, force: bool) -> Result<()> {
    let (json, bin) = raster_paths(stem);
    prepare_file(&json, force)?;
    prepare_file(&bin, force)?;
    write_f32_le(&bin, &raster.values)?;
    write_json(&json, &RasterMeta::new(raster.spec, name, provenance))
}

pub fn load_raster(stem: &Path) -> Result<(Raster, RasterMeta)> {
    let (json, bin) = raster_paths(stem);
    let meta: RasterMeta = read_json(&json)?;
    check_header(&meta.format, meta.version, &meta.dtype, RASTER_FORMAT, &json)?;
    meta.grid.validate()?;
    let values = read_f32_le(&bin)?;
    if values.len() != meta.grid.n_pixels() {
        return Err(Error::LengthMismatch {
            variable: meta.name.clone(),
            expected: meta.grid.n_pixels(),
            found: values.len(),
        });
    }
    Ok((Raster::new(meta.grid, values)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cube() -> ClimateCube {
        let g = GridSpec::with_step(20.0, 40.0, 0.1, 4, 4).unwrap();
        let t = TimeAxis::new("2020-01-01T00:00:00Z", 3, 8).unwrap();
        let a: Vec<f32> = (0..128).map(|x| x as f32 * 0.5).collect();
        let mut b: Vec<f32> = (0..128).map(|x| 280.0 - x as f32).collect();
        for t in 0..8 {
            b[t * 16 + 6] = f32::NAN;
        }
        ClimateCube::new(
            g,
            t,
            vec!["tp".into(), "t2m".into()],
            vec!["m".into(), "K".into()],
            vec![a, b],
        )
        .unwrap()
    }

    #[test]
    fn cube_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cube = small_cube();
        let path = dir.path().join("cube");
        save_cube(&cube, &path, false).unwrap();
        let back = load_cube(&path).unwrap();
        assert_eq!(back.n_variables(), 2);
        assert_eq!(back.spec().n_pixels(), 16);
        assert_eq!(back.time().n_steps, 8);
        assert_eq!(back.validity(), cube.validity());
        for v in 0..2 {
            let a: Vec<u32> = cube.values(v).iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.values(v).iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
        // exactly the all-NaN pixel is invalid
        assert_eq!(back.n_valid(), 15);
        assert!(!back.is_valid(6));
    }

    #[test]
    fn overwrite_requires_force() {
        let dir = tempfile::tempdir().unwrap();
        let cube = small_cube();
        let path = dir.path().join("cube");
        save_cube(&cube, &path, false).unwrap();
        assert!(matches!(save_cube(&cube, &path, false), Err(Error::AlreadyExists(_))));
        save_cube(&cube, &path, true).unwrap();
    }

    #[test]
    fn missing_variable_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube");
        save_cube(&small_cube(), &path, false).unwrap();
        fs::remove_file(path.join("t2m.f32")).unwrap();
        let err = load_cube(&path).unwrap_err();
        assert_eq!(err.to_string(), "missing variable t2m");
    }

    #[test]
    fn truncated_variable_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube");
        save_cube(&small_cube(), &path, false).unwrap();
        let bytes = fs::read(path.join("tp.f32")).unwrap();
        fs::write(path.join("tp.f32"), &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            load_cube(&path),
            Err(Error::LengthMismatch { ref variable, expected: 128, found: 127 }) if variable == "tp"
        ));
    }

    #[test]
    fn infinite_value_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube");
        save_cube(&small_cube(), &path, false).unwrap();
        let mut vals = read_f32_le(&path.join("tp.f32")).unwrap();
        vals[20] = f32::INFINITY;
        write_f32_le(&path.join("tp.f32"), &vals).unwrap();
        assert!(matches!(load_cube(&path), Err(Error::NonFinite { ref variable, .. }) if variable == "tp"));
    }

    #[test]
    fn inconsistent_axis_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube");
        save_cube(&small_cube(), &path, false).unwrap();
        let text = fs::read_to_string(path.join("meta.json")).unwrap();
        fs::write(path.join("meta.json"), text.replace("\"n_lat\": 4", "\"n_lat\": 1")).unwrap();
        assert!(matches!(load_cube(&path), Err(Error::Metadata(_))));
    }

    #[test]
    fn ndvi_round_trip_and_scan() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::with_step(20.0, 40.0, 0.1, 3, 3).unwrap();
        let obs = vec![
            NdviObservation { year: 2020, doy: 91, values: vec![0.1; 9] },
            NdviObservation { year: 2021, doy: 5, values: vec![f32::NAN; 9] },
        ];
        let raster = NdviRaster::new(g, obs).unwrap();
        let path = dir.path().join("ndvi");
        save_ndvi(&raster, &path, false).unwrap();
        assert!(path.join("2020_091.f32").is_file());
        let back = load_ndvi(&path).unwrap();
        assert_eq!(back.observations().len(), 2);
        assert_eq!(back.observations()[0].values, vec![0.1; 9]);

        // metadata without an observation list falls back to scanning
        let meta = serde_json::json!({"format": NDVI_FORMAT, "version": 1, "grid": g, "dtype": DTYPE});
        write_json(&path.join("meta.json"), &meta).unwrap();
        let scanned = load_ndvi(&path).unwrap();
        assert_eq!(scanned.years(), vec![2020, 2021]);
    }

    #[test]
    fn raster_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::with_step(20.0, 40.0, 0.1, 2, 3).unwrap();
        let r = Raster::new(g, vec![0.5, f32::NAN, 1.0, -2.0, 0.0, 3.0]).unwrap();
        let stem = dir.path().join("maps/css");
        save_raster(&stem, &r, "css", vec!["m1".into()], false).unwrap();
        let (back, meta) = load_raster(&stem).unwrap();
        assert_eq!(meta.provenance, vec!["m1".to_string()]);
        assert_eq!(back.values[0], 0.5);
        assert!(back.values[1].is_nan());
        assert!(save_raster(&stem, &r, "css", vec![], false).is_err());
    }
}
