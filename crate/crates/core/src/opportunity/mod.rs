//! Opportunity maps, restoration candidates, attribute screening and climate analogs.

mod analog;
mod candidates;
mod rules;

use std::path::Path;

pub use analog::{
    find_analog, find_analogs, percentile, read_match_table, uplift_report, AnalogMatch, AnalogOutcome, AnalogParams,
    BindingConstraint, MatchRecord, UpliftReport, DEFAULT_DISTANCE_PERCENTILE,
};
pub use candidates::{extract_candidates, opportunity_map, CandidateSite};
pub use rules::{
    filter_candidates, join_attributes, normalize_key, AttributeTable, ClimateZone, FilterReport, Op, Rule, RuleSet,
    SiteAttributes, DEFAULT_RULES,
};

use crate::error::{Error, Result};
use crate::geo::format_dms_pair;
use crate::pipeline::training::fmt_f64;

/// Attribute columns in published order, as normalized keys and headers.
pub const ATTRIBUTE_COLUMNS: [(&str, &str); 7] = [
    ("province", "Province"),
    ("climate_zone", "Climate Zone"),
    ("terrain", "Terrain"),
    ("elevation_m", "Elevation (m)"),
    ("vegetation", "Vegetation"),
    ("anthropogenic_influence", "Anthropogenic Influence"),
    ("accessibility", "Accessibility"),
];

/// Candidates in the published column order, followed by location and screening columns.
pub fn write_candidates_csv(path: &Path, sites: &[CandidateSite]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["No.", "CSS"];
    header.extend(ATTRIBUTE_COLUMNS.iter().map(|c| c.1));
    header.extend(["lat", "lon", "NDVI", "opportunity", "status"]);
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for s in sites {
        let mut row = vec![s.rank.to_string(), format!("{:.3}", s.css)];
        for (key, _) in ATTRIBUTE_COLUMNS {
            row.push(s.attributes.as_ref().and_then(|a| a.get(key)).unwrap_or("").to_string());
        }
        row.push(fmt_f64(s.lat));
        row.push(fmt_f64(s.lon));
        row.push(fmt_f64(s.ndvi));
        row.push(fmt_f64(s.opportunity));
        row.push(
            match (&s.attributes, s.retained) {
                (None, _) => "unannotated",
                (Some(_), None) => "unscreened",
                (Some(_), Some(true)) => "retained",
                (Some(_), Some(false)) => "excluded",
            }
            .to_string(),
        );
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Matches in the published column order, followed by the uplift ratio.
pub fn write_matches_csv(path: &Path, matches: &[(usize, AnalogMatch)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([
        "No.",
        "Selected Location",
        "Intact Ecosystem Location",
        "Pred. NDVI",
        "Int. NDVI",
        "Climate Dist.",
        "Spatial Dist. (km)",
        "uplift",
    ])
    .map_err(|e| Error::csv(path, e))?;
    for (site, m) in matches {
        w.write_record([
            site.to_string(),
            format_dms_pair(m.candidate_lat, m.candidate_lon),
            format_dms_pair(m.analog_lat, m.analog_lon),
            format!("{:.4}", m.candidate_ndvi),
            format!("{:.4}", m.analog_ndvi),
            format!("{:.4}", m.climate_distance),
            format!("{:.1}", m.spatial_km),
            fmt_f64(m.uplift),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
