//! Discretization of continuous attributes into embeddable symbols.

use crate::error::{Error, Result};

/// Meters per degree of latitude used by the local equirectangular projection.
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// Map a coordinate to a square grid cell `"gx_gy"` relative to `origin`.
///
/// Uses an equirectangular projection about the origin, which is accurate to
/// well under a cell at city scale.
pub fn discretize_location(lat: f64, lon: f64, origin: (f64, f64), cell_m: f64) -> Result<String> {
    if !(cell_m > 0.0) || !cell_m.is_finite() {
        return Err(Error::Parameter(format!(
            "cell size must be positive, got {cell_m}"
        )));
    }
    if !lat.is_finite() || !lon.is_finite() || lat.abs() > 90.0 || lon.abs() > 180.0 {
        return Err(Error::InvalidCoordinate { lat, lon });
    }
    let (lat0, lon0) = origin;
    let east = (lon - lon0) * lat0.to_radians().cos() * METERS_PER_DEGREE;
    let north = (lat - lat0) * METERS_PER_DEGREE;
    let gx = (east / cell_m).floor() as i64;
    let gy = (north / cell_m).floor() as i64;
    Ok(format!("{gx}_{gy}"))
}

/// Bin an epoch timestamp into `floor(ts / granularity)`.
pub fn discretize_timestamp(ts: i64, granularity: i64) -> Result<String> {
    if granularity <= 0 {
        return Err(Error::Parameter(format!(
            "timestamp granularity must be positive, got {granularity}"
        )));
    }
    Ok(ts.div_euclid(granularity).to_string())
}

/// Lowercase, split on non-alphanumerics, drop tokens shorter than two chars.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}
