//! Binary greymap (P5) heatmaps.

use std::fs;
use std::path::Path;

use drycss_core::{Error, Raster, Result};
use serde::Serialize;

/// Value range mapped onto grey levels 1..=255; level 0 marks no-data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreyScale {
    pub min: f64,
    pub max: f64,
}

/// Encodes a raster north-up (first image row is the northernmost latitude).
pub fn encode_pgm(raster: &Raster) -> (Vec<u8>, Option<GreyScale>) {
    let spec = raster.spec;
    let valid = raster.values.iter().filter(|v| v.is_finite()).map(|v| *v as f64);
    let scale = valid.fold(None, |acc: Option<GreyScale>, v| match acc {
        None => Some(GreyScale { min: v, max: v }),
        Some(s) => Some(GreyScale {
            min: s.min.min(v),
            max: s.max.max(v),
        }),
    });
    let mut out = format!("P5\n{} {}\n255\n", spec.n_lon, spec.n_lat).into_bytes();
    for i in (0..spec.n_lat).rev() {
        for j in 0..spec.n_lon {
            let v = raster.get(i, j) as f64;
            out.push(match scale {
                Some(s) if v.is_finite() => {
                    let t = if s.max > s.min { (v - s.min) / (s.max - s.min) } else { 0.5 };
                    1 + (t * 254.0).round() as u8
                }
                _ => 0,
            });
        }
    }
    (out, scale)
}

pub fn write_pgm(path: &Path, raster: &Raster) -> Result<Option<GreyScale>> {
    let (bytes, scale) = encode_pgm(raster);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use drycss_core::GridSpec;

    #[test]
    fn north_row_first_and_nan_black() {
        let spec = GridSpec::with_step(0.0, 0.0, 1.0, 2, 2).unwrap();
        let r = Raster::new(spec, vec![0.0, 1.0, f32::NAN, 0.5]).unwrap();
        let (bytes, scale) = encode_pgm(&r);
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 128, 1, 255]);
        assert_eq!(scale, Some(GreyScale { min: 0.0, max: 1.0 }));
    }
}
