//! In-sample rescoring of the labeled locations with the trained ensemble.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ensemble::Ensemble;
use super::samples::{Category, LabeledSample};
use super::training::fmt_f64;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::spectral::FeatureSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reclassified {
    pub id: u32,
    pub category: Category,
    pub label: u8,
    pub ndvi: f64,
    /// NaN when the ensemble has no BLUP models.
    pub blup: f64,
    /// NaN when the ensemble has no networks.
    pub nn: f64,
    pub combined: f64,
}

/// Scores every sample with every model; `features` holds one `k_max` row per sample.
pub fn reclassify(
    ensemble: &Ensemble,
    space: &FeatureSpace,
    samples: &[LabeledSample],
    features: &Matrix,
) -> Result<Vec<Reclassified>> {
    if ensemble.n_models() == 0 {
        return Err(Error::InvalidInput("reclassification needs at least one model".into()));
    }
    if features.rows() != samples.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} samples",
            features.rows(),
            samples.len()
        )));
    }
    ensemble.check_lineage(space)?;
    let s = ensemble.score(space, features)?;
    Ok(samples
        .iter()
        .enumerate()
        .map(|(i, smp)| Reclassified {
            id: smp.id,
            category: smp.category,
            label: smp.label,
            ndvi: smp.ndvi,
            blup: s.blup[i],
            nn: s.nn[i],
            combined: s.combined[i],
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMeans {
    pub category: Category,
    pub n: usize,
    pub blup: f64,
    pub nn: f64,
    pub combined: f64,
}

/// Mean scores per category, in [`Category::ALL`] order, skipping empty categories.
pub fn category_means(rows: &[Reclassified]) -> Vec<CategoryMeans> {
    let mut by: BTreeMap<Category, Vec<&Reclassified>> = BTreeMap::new();
    for r in rows {
        by.entry(r.category).or_default().push(r);
    }
    Category::ALL
        .iter()
        .filter_map(|c| {
            let rs = by.get(c)?;
            let mean = |f: fn(&Reclassified) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64;
            Some(CategoryMeans {
                category: *c,
                n: rs.len(),
                blup: mean(|r| r.blup),
                nn: mean(|r| r.nn),
                combined: mean(|r| r.combined),
            })
        })
        .collect()
}

pub fn write_reclassified_csv(path: &Path, rows: &[Reclassified]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut put = |rec: &[String]| w.write_record(rec).map_err(|e| Error::csv(path, e));
    put(&["id", "category", "label", "ndvi", "blup", "nn", "combined"].map(String::from))?;
    for r in rows {
        put(&[
            r.id.to_string(),
            r.category.to_string(),
            r.label.to_string(),
            fmt_f64(r.ndvi),
            fmt_f64(r.blup),
            fmt_f64(r.nn),
            fmt_f64(r.combined),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize)]
struct ReclassifiedRow {
    id: u32,
    category: String,
    label: u8,
    ndvi: f64,
    blup: f64,
    nn: f64,
    combined: f64,
}

pub fn read_reclassified_csv(path: &Path) -> Result<Vec<Reclassified>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize::<ReclassifiedRow>()
        .map(|row| {
            let row = row.map_err(|e| Error::csv(path, e))?;
            Ok(Reclassified {
                id: row.id,
                category: row.category.parse()?,
                label: row.label,
                ndvi: row.ndvi,
                blup: row.blup,
                nn: row.nn,
                combined: row.combined,
            })
        })
        .collect()
}
