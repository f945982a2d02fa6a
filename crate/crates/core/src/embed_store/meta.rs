use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{EmbedError, Result};

pub const DEFAULT_FOOTPRINT_HALF_WIDTH_KM: f64 = 10.0;

/// UTC instant at one-second resolution, as Unix seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn seconds(self) -> i64 {
        self.0
    }
}

impl FromStr for Timestamp {
    type Err = String;

    /// RFC 3339 / ISO-8601 with an explicit offset; sub-second parts are rejected.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = DateTime::parse_from_rfc3339(s.trim()).map_err(|e| format!("timestamp {s:?}: {e}"))?;
        if t.timestamp_subsec_nanos() != 0 {
            return Err(format!("timestamp {s:?} has sub-second precision"));
        }
        Ok(Timestamp(t.timestamp()))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(t) => write!(f, "{}", t.format("%Y-%m-%dT%H:%M:%SZ")),
            None => write!(f, "@{}", self.0),
        }
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Acquisition time and image-centre position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoMeta {
    pub timestamp: Timestamp,
    pub lat: f64,
    pub lon: f64,
    #[serde(default = "default_half_width")]
    pub footprint_half_width_km: f64,
}

fn default_half_width() -> f64 {
    DEFAULT_FOOTPRINT_HALF_WIDTH_KM
}

impl GeoMeta {
    pub fn new(timestamp: Timestamp, lat: f64, lon: f64) -> std::result::Result<Self, String> {
        let m = Self { timestamp, lat, lon, footprint_half_width_km: DEFAULT_FOOTPRINT_HALF_WIDTH_KM };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(format!("lat {} outside [-90, 90]", self.lat));
        }
        if !(-180.0..180.0).contains(&self.lon) {
            return Err(format!("lon {} outside [-180, 180)", self.lon));
        }
        if !(self.footprint_half_width_km > 0.0 && self.footprint_half_width_km.is_finite()) {
            return Err(format!("footprint half-width {} must be positive", self.footprint_half_width_km));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    #[serde(rename = "id")]
    pub image_id: String,
    #[serde(flatten)]
    pub meta: GeoMeta,
}

/// Reads the line-delimited JSON sidecar, one object per image:
/// `{"id":…,"timestamp":"2016-03-01T10:00:00Z","lat":…,"lon":…}`.
pub fn parse_meta_sidecar<R: BufRead>(reader: R) -> Result<Vec<ImageMeta>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ImageMeta =
            serde_json::from_str(&line).map_err(|e| EmbedError::MetaParse { line: lineno, msg: e.to_string() })?;
        rec.meta.validate().map_err(|msg| EmbedError::MetaParse { line: lineno, msg })?;
        if !seen.insert(rec.image_id.clone()) {
            return Err(EmbedError::DuplicateImageId(rec.image_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_meta_sidecar<W: Write>(mut w: W, records: &[ImageMeta]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| EmbedError::MetaParse { line: 0, msg: e.to_string() })?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}
