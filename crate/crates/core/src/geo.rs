//! Spherical-earth helpers.

use crate::error::{Error, Result};

/// Mean earth radius in km (spherical model).
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance in km between two lat/lon points given in degrees (haversine).
pub fn great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Parses one degrees-minutes-seconds coordinate such as `25°59'35.9"N`.
///
/// Southern and western hemispheres come back negative.
pub fn parse_dms(text: &str) -> Result<f64> {
    let bad = || Error::InvalidInput(format!("unparseable coordinate {text:?}"));
    let text = text.trim();
    let hemi = text.chars().last().ok_or_else(bad)?;
    let sign = match hemi {
        'N' | 'E' => 1.0,
        'S' | 'W' => -1.0,
        _ => return Err(bad()),
    };
    let body = &text[..text.len() - hemi.len_utf8()];
    let (deg, rest) = body.split_once('°').ok_or_else(bad)?;
    let (min, rest) = rest.split_once('\'').ok_or_else(bad)?;
    let sec = rest.trim_end_matches('"');
    let deg: f64 = deg.trim().parse().map_err(|_| bad())?;
    let min: f64 = min.trim().parse().map_err(|_| bad())?;
    let sec: f64 = if sec.trim().is_empty() {
        0.0
    } else {
        sec.trim().parse().map_err(|_| bad())?
    };
    if !(0.0..60.0).contains(&min) || !(0.0..60.0).contains(&sec) {
        return Err(bad());
    }
    Ok(sign * (deg + min / 60.0 + sec / 3600.0))
}

/// Parses a `lat lon` pair of DMS coordinates separated by whitespace.
pub fn parse_dms_pair(text: &str) -> Result<(f64, f64)> {
    let mut parts = text.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) => Ok((parse_dms(a)?, parse_dms(b)?)),
        _ => Err(Error::InvalidInput(format!(
            "expected \"<lat> <lon>\" coordinate pair, got {text:?}"
        ))),
    }
}

/// Formats one coordinate as degrees, minutes and seconds to 0.1 arc-second.
pub fn format_dms(value: f64, positive: char, negative: char) -> String {
    let hemi = if value < 0.0 { negative } else { positive };
    let tenths = (value.abs() * 36000.0).round() as u64;
    let (deg, rem) = (tenths / 36000, tenths % 36000);
    let (min, sec) = (rem / 600, rem % 600);
    format!("{deg}°{min:02}'{:02}.{}\"{hemi}", sec / 10, sec % 10)
}

/// Formats a point as `lat lon` in DMS, the inverse of [`parse_dms_pair`].
pub fn format_dms_pair(lat: f64, lon: f64) -> String {
    format!("{} {}", format_dms(lat, 'N', 'S'), format_dms(lon, 'E', 'W'))
}
