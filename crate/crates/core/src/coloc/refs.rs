use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ColocError, Result};
use crate::embed_store::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefKind {
    AltimeterSwh,
    ScatWind,
}

impl RefKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RefKind::AltimeterSwh => "altimeter_swh",
            RefKind::ScatWind => "scat_wind",
        }
    }
}

/// One altimeter or scatterometer record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefMeasurement {
    pub time: Timestamp,
    pub lat: f64,
    pub lon: f64,
    pub kind: RefKind,
    pub swh_m: Option<f64>,
    pub wind_speed_ms: Option<f64>,
    pub wind_dir_deg: Option<f64>,
    /// Names of flags that are set.
    pub flags: BTreeSet<String>,
}

impl RefMeasurement {
    pub fn swh(time: Timestamp, lat: f64, lon: f64, swh_m: f64) -> Self {
        Self { time, lat, lon, kind: RefKind::AltimeterSwh, swh_m: Some(swh_m), wind_speed_ms: None, wind_dir_deg: None, flags: BTreeSet::new() }
    }

    pub fn wind(time: Timestamp, lat: f64, lon: f64, speed_ms: f64, dir_deg: f64) -> Self {
        Self {
            time,
            lat,
            lon,
            kind: RefKind::ScatWind,
            swh_m: None,
            wind_speed_ms: Some(speed_ms),
            wind_dir_deg: Some(dir_deg),
            flags: BTreeSet::new(),
        }
    }

    pub fn with_flag(mut self, name: &str) -> Self {
        self.flags.insert(name.to_string());
        self
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..180.0).contains(&self.lon) {
            return Err(format!("position ({}, {}) out of range", self.lat, self.lon));
        }
        let nonneg = |v: Option<f64>| v.is_some_and(|x| x.is_finite() && x >= 0.0);
        match self.kind {
            RefKind::AltimeterSwh => {
                if !nonneg(self.swh_m) || self.wind_speed_ms.is_some() || self.wind_dir_deg.is_some() {
                    return Err("altimeter_swh needs a non-negative swh_m and no wind fields".into());
                }
            }
            RefKind::ScatWind => {
                let dir_ok = self.wind_dir_deg.is_some_and(|d| (0.0..360.0).contains(&d));
                if !nonneg(self.wind_speed_ms) || !dir_ok || self.swh_m.is_some() {
                    return Err("scat_wind needs wind_speed_ms >= 0, wind_dir_deg in [0, 360) and no swh_m".into());
                }
            }
        }
        Ok(())
    }
}

const REF_HEADER: [&str; 8] = ["time", "lat", "lon", "kind", "swh_m", "wind_speed_ms", "wind_dir_deg", "flags"];

/// Reads a reference stream CSV:
/// `time,lat,lon,kind,swh_m,wind_speed_ms,wind_dir_deg,flags` with empty
/// cells for absent values and flags joined by `;`.
pub fn read_refs_csv<R: Read>(reader: R) -> Result<Vec<RefMeasurement>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != REF_HEADER {
        return Err(ColocError::RefParse { line: 1, msg: format!("expected header {REF_HEADER:?}, got {header:?}") });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| ColocError::RefParse { line, msg };
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        let kind = match &rec[3] {
            "altimeter_swh" => RefKind::AltimeterSwh,
            "scat_wind" => RefKind::ScatWind,
            other => return Err(bad(format!("unknown kind {other:?}"))),
        };
        let m = RefMeasurement {
            time: rec[0].parse().map_err(bad)?,
            lat: num(&rec[1])?,
            lon: num(&rec[2])?,
            kind,
            swh_m: opt(&rec[4])?,
            wind_speed_ms: opt(&rec[5])?,
            wind_dir_deg: opt(&rec[6])?,
            flags: rec[7].split(';').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect(),
        };
        m.validate().map_err(bad)?;
        out.push(m);
    }
    Ok(out)
}

pub fn write_refs_csv<W: Write>(writer: W, refs: &[RefMeasurement]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REF_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in refs {
        let flags = r.flags.iter().map(String::as_str).collect::<Vec<_>>().join(";");
        w.write_record([
            r.time.to_string(),
            r.lat.to_string(),
            r.lon.to_string(),
            r.kind.as_str().to_string(),
            opt(r.swh_m),
            opt(r.wind_speed_ms),
            opt(r.wind_dir_deg),
            flags,
        ])?;
    }
    w.flush()?;
    Ok(())
}
