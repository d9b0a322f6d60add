//! Labeled reference locations.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::great_circle_km;

/// Minimum great-circle spacing between reference locations, km.
pub const MIN_SAMPLE_SPACING_KM: f64 = 9.0;

/// Climatic suitability crossed with vegetation prevalence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    /// Persistent natural vegetation.
    #[serde(rename = "HiSuit-HiVeg")]
    HiSuitHiVeg,
    /// Persistent absence of vegetation.
    #[serde(rename = "LoSuit-LoVeg")]
    LoSuitLoVeg,
    /// Vegetation sustained by irrigation.
    #[serde(rename = "LoSuit-HiVeg")]
    LoSuitHiVeg,
    /// Degraded land that should support vegetation.
    #[serde(rename = "HiSuit-LoVeg")]
    HiSuitLoVeg,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::HiSuitHiVeg,
        Category::LoSuitLoVeg,
        Category::LoSuitHiVeg,
        Category::HiSuitLoVeg,
    ];

    pub fn label(self) -> u8 {
        match self {
            Category::HiSuitHiVeg | Category::HiSuitLoVeg => 1,
            Category::LoSuitLoVeg | Category::LoSuitHiVeg => 0,
        }
    }

    /// The two categories whose vegetation reflects climate alone.
    pub fn is_main(self) -> bool {
        matches!(self, Category::HiSuitHiVeg | Category::LoSuitLoVeg)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::HiSuitHiVeg => "HiSuit-HiVeg",
            Category::LoSuitLoVeg => "LoSuit-LoVeg",
            Category::LoSuitHiVeg => "LoSuit-HiVeg",
            Category::HiSuitLoVeg => "HiSuit-LoVeg",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown sample category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: u32,
    pub lat: f64,
    pub lon: f64,
    pub category: Category,
    pub label: u8,
    /// Multi-year summer NDVI at the location.
    pub ndvi: f64,
}

impl LabeledSample {
    pub fn new(id: u32, lat: f64, lon: f64, category: Category, ndvi: f64) -> Self {
        LabeledSample {
            id,
            lat,
            lon,
            category,
            label: category.label(),
            ndvi,
        }
    }
}

/// Checks label consistency, unique ids and the pairwise spacing rule.
pub fn validate_samples(samples: &[LabeledSample], min_spacing_km: f64) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if s.label != s.category.label() {
            return Err(Error::InvalidInput(format!(
                "sample {}: label {} contradicts category {}",
                s.id, s.label, s.category
            )));
        }
        if !s.lat.is_finite() || !s.lon.is_finite() {
            return Err(Error::InvalidInput(format!("sample {}: non-finite location", s.id)));
        }
        for t in &samples[..i] {
            if t.id == s.id {
                return Err(Error::DuplicateKey(format!("sample id {}", s.id)));
            }
            let d = great_circle_km(s.lat, s.lon, t.lat, t.lon);
            if d < min_spacing_km {
                return Err(Error::InvalidInput(format!(
                    "samples {} and {} are {d:.2} km apart (minimum {min_spacing_km} km)",
                    t.id, s.id
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    id: u32,
    lat: f64,
    lon: f64,
    category: String,
    label: u8,
    ndvi: f64,
}

pub fn write_samples_csv(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for s in samples {
        w.serialize(SampleRow {
            id: s.id,
            lat: s.lat,
            lon: s.lon,
            category: s.category.to_string(),
            label: s.label,
            ndvi: s.ndvi,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<LabeledSample>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for row in r.deserialize::<SampleRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let category: Category = row.category.parse()?;
        out.push(LabeledSample {
            id: row.id,
            lat: row.lat,
            lon: row.lon,
            category,
            label: row.label,
            ndvi: row.ndvi,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_categories() {
        assert_eq!(Category::HiSuitHiVeg.label(), 1);
        assert_eq!(Category::HiSuitLoVeg.label(), 1);
        assert_eq!(Category::LoSuitHiVeg.label(), 0);
        assert_eq!(Category::LoSuitLoVeg.label(), 0);
        assert_eq!("hisuit-loveg".parse::<Category>().unwrap(), Category::HiSuitLoVeg);
    }

    #[test]
    fn spacing_rule() {
        let a = LabeledSample::new(0, 20.0, 40.0, Category::HiSuitHiVeg, 0.2);
        let near = LabeledSample::new(1, 20.05, 40.0, Category::LoSuitLoVeg, 0.05);
        let far = LabeledSample::new(2, 20.1, 40.0, Category::LoSuitLoVeg, 0.05);
        assert!(validate_samples(&[a.clone(), near], MIN_SAMPLE_SPACING_KM).is_err());
        assert!(validate_samples(&[a.clone(), far.clone()], MIN_SAMPLE_SPACING_KM).is_ok());
        let mut wrong = far;
        wrong.label = 1;
        assert!(validate_samples(&[a, wrong], MIN_SAMPLE_SPACING_KM).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("samples.csv");
        let s = vec![
            LabeledSample::new(0, 20.1, 40.3, Category::HiSuitLoVeg, 0.031),
            LabeledSample::new(1, 21.7, 42.9, Category::LoSuitHiVeg, 0.27),
        ];
        write_samples_csv(&p, &s).unwrap();
        assert_eq!(read_samples_csv(&p).unwrap(), s);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("id,lat,lon,category,label,ndvi\n"));
    }
}
