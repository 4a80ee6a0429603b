//! Coordinates, location fixes and great-circle distance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinates ({lat}, {lon})")]
    InvalidCoordinates { lat: f64, lon: f64 },
    #[error("invalid fix: {0}")]
    InvalidFix(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let p = Self { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if self.lat.is_finite() && self.lon.is_finite() && self.lat.abs() <= 90.0 && self.lon.abs() <= 180.0 {
            Ok(())
        } else {
            Err(GeoError::InvalidCoordinates {
                lat: self.lat,
                lon: self.lon,
            })
        }
    }

    /// Point displaced by a small local north/east offset in meters
    /// (equirectangular approximation).
    pub fn offset_m(self, north_m: f64, east_m: f64) -> LatLon {
        let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
        let dlon = (east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos())).to_degrees();
        LatLon {
            lat: self.lat + dlat,
            lon: self.lon + dlon,
        }
    }
}

/// Haversine distance in meters.
pub fn geo_distance(a: LatLon, b: LatLon) -> Result<f64, GeoError> {
    a.validate()?;
    b.validate()?;
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin())
}

/// A positioning result with its postal code attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoFix {
    pub latitude: f64,
    pub longitude: f64,
    /// Meters.
    pub accuracy: f64,
    pub zip: String,
}

impl GeoFix {
    pub fn new(at: LatLon, accuracy: f64, zip: impl Into<String>) -> Self {
        Self {
            latitude: at.lat,
            longitude: at.lon,
            accuracy,
            zip: zip.into(),
        }
    }

    pub fn position(&self) -> LatLon {
        LatLon {
            lat: self.latitude,
            lon: self.longitude,
        }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        self.position().validate()?;
        if !(self.accuracy.is_finite() && self.accuracy >= 0.0) {
            return Err(GeoError::InvalidFix(format!("accuracy {}", self.accuracy)));
        }
        if self.zip.trim().is_empty() {
            return Err(GeoError::InvalidFix("empty zip".into()));
        }
        Ok(())
    }
}
