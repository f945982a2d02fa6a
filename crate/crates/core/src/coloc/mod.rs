//! Matchup construction: pairs SAR image metadata with altimeter (wave
//! height) or scatterometer (wind) records under time, space and flag gates.
//!
//! Two presets carry the published protocols:
//! - [`ColocCriteria::standard_swh`]: 3 h window, ±2° lat/lon box around the
//!   image centre, no flag set, closest record kept;
//! - [`ColocCriteria::standard_wind`]: 30 min window, record inside the image
//!   footprint, rain flag clear, mean over all admitted records.
//!
//! Flags are checked before selection; a flagged record never wins a tie.

mod geo;
mod index;
mod refs;

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circular::vector_mean_deg;
use crate::embed_store::{GeoMeta, ImageMeta, LabelTable, Labels, Unit};

pub use geo::{delta_lon_deg, haversine_km, tangent_plane_offset_km, EARTH_RADIUS_KM};
pub use index::SpatiotemporalIndex;
pub use refs::{read_refs_csv, write_refs_csv, RefKind, RefMeasurement};

/// Flag name that matches every flag in `require_flags_clear`.
pub const ANY_FLAG: &str = "*";
pub const RAIN_FLAG: &str = "rain_flag";

#[derive(Debug, Error)]
pub enum ColocError {
    #[error("image {image_id}: wind directions cancel out, no mean direction")]
    DegenerateDirectionMean { image_id: String },
    #[error("invalid criteria: {0}")]
    InvalidCriteria(String),
    #[error("criteria target {found:?}, expected {expected:?}")]
    TargetMismatch { expected: RefKind, found: RefKind },
    #[error("reference CSV line {line}: {msg}")]
    RefParse { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ColocError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialGate {
    /// `|Δlat| <= half_width_deg` and `|Δlon| <= half_width_deg`, longitude wrapped.
    LatlonBoxDeg { half_width_deg: f64 },
    /// Inside the image's square footprint in the local tangent plane.
    Footprint,
    GreatCircleKm { radius_km: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Smallest distance, then smallest |Δt|, then earliest record.
    Closest,
    /// Average of every admitted record.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColocCriteria {
    pub target: RefKind,
    pub max_dt_s: i64,
    pub spatial_gate: SpatialGate,
    pub require_flags_clear: BTreeSet<String>,
    pub tie_break: TieBreak,
}

impl ColocCriteria {
    pub fn standard_swh() -> Self {
        Self {
            target: RefKind::AltimeterSwh,
            max_dt_s: 3 * 3600,
            spatial_gate: SpatialGate::LatlonBoxDeg { half_width_deg: 2.0 },
            require_flags_clear: [ANY_FLAG.to_string()].into(),
            tie_break: TieBreak::Closest,
        }
    }

    pub fn standard_wind() -> Self {
        Self {
            target: RefKind::ScatWind,
            max_dt_s: 30 * 60,
            spatial_gate: SpatialGate::Footprint,
            require_flags_clear: [RAIN_FLAG.to_string()].into(),
            tie_break: TieBreak::Mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_dt_s <= 0 {
            return Err(ColocError::InvalidCriteria(format!("max_dt_s must be positive, got {}", self.max_dt_s)));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match self.spatial_gate {
            SpatialGate::LatlonBoxDeg { half_width_deg } if !positive(half_width_deg) => {
                Err(ColocError::InvalidCriteria(format!("box half-width {half_width_deg} must be positive")))
            }
            SpatialGate::GreatCircleKm { radius_km } if !positive(radius_km) => {
                Err(ColocError::InvalidCriteria(format!("radius {radius_km} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// One-line human summary, e.g. `target=altimeter_swh max_dt_s=10800 (3 h) gate=latlon_box ±2° …`.
    pub fn describe(&self) -> String {
        let dt = if self.max_dt_s % 3600 == 0 {
            format!("{} h", self.max_dt_s / 3600)
        } else if self.max_dt_s % 60 == 0 {
            format!("{} min", self.max_dt_s / 60)
        } else {
            format!("{} s", self.max_dt_s)
        };
        let gate = match self.spatial_gate {
            SpatialGate::LatlonBoxDeg { half_width_deg } => format!("latlon_box ±{half_width_deg}°"),
            SpatialGate::Footprint => "footprint".to_string(),
            SpatialGate::GreatCircleKm { radius_km } => format!("great_circle {radius_km} km"),
        };
        let flags = self.require_flags_clear.iter().map(String::as_str).collect::<Vec<_>>().join(";");
        let tie = match self.tie_break {
            TieBreak::Closest => "closest",
            TieBreak::Mean => "mean",
        };
        format!(
            "target={} max_dt_s={} ({dt}) gate={gate} flags_clear={} tie_break={tie}",
            self.target.as_str(),
            self.max_dt_s,
            if flags.is_empty() { "none" } else { &flags }
        )
    }

    pub fn flags_clear(&self, r: &RefMeasurement) -> bool {
        if self.require_flags_clear.contains(ANY_FLAG) {
            return r.flags.is_empty();
        }
        self.require_flags_clear.is_disjoint(&r.flags)
    }

    pub fn gate_admits(&self, img: &GeoMeta, r: &RefMeasurement) -> bool {
        match self.spatial_gate {
            SpatialGate::LatlonBoxDeg { half_width_deg } => {
                (r.lat - img.lat).abs() <= half_width_deg && delta_lon_deg(img.lon, r.lon).abs() <= half_width_deg
            }
            SpatialGate::Footprint => match tangent_plane_offset_km((img.lat, img.lon), (r.lat, r.lon)) {
                Some((e, n)) => e.abs() <= img.footprint_half_width_km && n.abs() <= img.footprint_half_width_km,
                None => false,
            },
            SpatialGate::GreatCircleKm { radius_km } => haversine_km((img.lat, img.lon), (r.lat, r.lon)) <= radius_km,
        }
    }

    /// Every rule: kind, time window, spatial gate and flags.
    pub fn admits(&self, img: &GeoMeta, r: &RefMeasurement) -> bool {
        r.kind == self.target
            && (r.time.seconds() - img.timestamp.seconds()).abs() <= self.max_dt_s
            && self.gate_admits(img, r)
            && self.flags_clear(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatchValue {
    Swh { swh_m: f64 },
    Wind { wind_speed_ms: f64, wind_dir_deg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matchup {
    pub image_id: String,
    #[serde(flatten)]
    pub value: MatchValue,
    /// Reference time minus image time (mean over records for mean matchups).
    pub dt_s: f64,
    pub distance_km: f64,
    pub n_candidates: usize,
    /// Record indices that produced the value.
    pub ref_indices: Vec<usize>,
}

fn dt_of(img: &GeoMeta, r: &RefMeasurement) -> i64 {
    r.time.seconds() - img.timestamp.seconds()
}

fn dist_of(img: &GeoMeta, r: &RefMeasurement) -> f64 {
    haversine_km((img.lat, img.lon), (r.lat, r.lon))
}

fn value_of(r: &RefMeasurement) -> MatchValue {
    match r.kind {
        RefKind::AltimeterSwh => MatchValue::Swh { swh_m: r.swh_m.expect("validated altimeter record") },
        RefKind::ScatWind => MatchValue::Wind {
            wind_speed_ms: r.wind_speed_ms.expect("validated wind record"),
            wind_dir_deg: r.wind_dir_deg.expect("validated wind record"),
        },
    }
}

/// Reduces admitted record indices (ascending) to one matchup.
fn reduce(img: &ImageMeta, refs: &[RefMeasurement], cands: &[usize], c: &ColocCriteria) -> Result<Option<Matchup>> {
    if cands.is_empty() {
        return Ok(None);
    }
    let meta = &img.meta;
    let m = match c.tie_break {
        TieBreak::Closest => {
            let best = *cands
                .iter()
                .min_by(|&&a, &&b| {
                    let (ra, rb) = (&refs[a], &refs[b]);
                    dist_of(meta, ra)
                        .total_cmp(&dist_of(meta, rb))
                        .then(dt_of(meta, ra).abs().cmp(&dt_of(meta, rb).abs()))
                        .then(a.cmp(&b))
                })
                .expect("non-empty");
            let r = &refs[best];
            Matchup {
                image_id: img.image_id.clone(),
                value: value_of(r),
                dt_s: dt_of(meta, r) as f64,
                distance_km: dist_of(meta, r),
                n_candidates: cands.len(),
                ref_indices: vec![best],
            }
        }
        TieBreak::Mean => {
            let n = cands.len() as f64;
            let mean = |f: &dyn Fn(&RefMeasurement) -> f64| cands.iter().map(|&i| f(&refs[i])).sum::<f64>() / n;
            let value = match c.target {
                RefKind::AltimeterSwh => MatchValue::Swh { swh_m: mean(&|r| r.swh_m.unwrap()) },
                RefKind::ScatWind => {
                    let dirs: Vec<f64> = cands.iter().map(|&i| refs[i].wind_dir_deg.unwrap()).collect();
                    let dir = vector_mean_deg(&dirs, None)
                        .ok_or_else(|| ColocError::DegenerateDirectionMean { image_id: img.image_id.clone() })?;
                    MatchValue::Wind { wind_speed_ms: mean(&|r| r.wind_speed_ms.unwrap()), wind_dir_deg: dir }
                }
            };
            Matchup {
                image_id: img.image_id.clone(),
                value,
                dt_s: mean(&|r| dt_of(meta, r) as f64),
                distance_km: mean(&|r| dist_of(meta, r)),
                n_candidates: cands.len(),
                ref_indices: cands.to_vec(),
            }
        }
    };
    Ok(Some(m))
}

/// Matches one image using the index; `None` when nothing passes the gates.
pub fn match_image(img: &ImageMeta, idx: &SpatiotemporalIndex<'_>, c: &ColocCriteria) -> Result<Option<Matchup>> {
    let cands = idx.candidates(img, c);
    reduce(img, idx.refs(), &cands, c)
}

/// Wave-height matchup (criteria must target altimeter records).
pub fn match_swh(img: &ImageMeta, idx: &SpatiotemporalIndex<'_>, c: &ColocCriteria) -> Result<Option<Matchup>> {
    if c.target != RefKind::AltimeterSwh {
        return Err(ColocError::TargetMismatch { expected: RefKind::AltimeterSwh, found: c.target });
    }
    match_image(img, idx, c)
}

/// Wind matchup (criteria must target scatterometer records).
pub fn match_wind(img: &ImageMeta, idx: &SpatiotemporalIndex<'_>, c: &ColocCriteria) -> Result<Option<Matchup>> {
    if c.target != RefKind::ScatWind {
        return Err(ColocError::TargetMismatch { expected: RefKind::ScatWind, found: c.target });
    }
    match_image(img, idx, c)
}

/// Re-checks a matchup against its criteria and recomputes its value.
pub fn verify_matchup(m: &Matchup, img: &ImageMeta, refs: &[RefMeasurement], c: &ColocCriteria) -> std::result::Result<(), String> {
    if m.image_id != img.image_id {
        return Err(format!("matchup for {} checked against {}", m.image_id, img.image_id));
    }
    if m.ref_indices.is_empty() || m.n_candidates == 0 {
        return Err("matchup without records".into());
    }
    for &i in &m.ref_indices {
        let r = refs.get(i).ok_or_else(|| format!("record {i} out of range"))?;
        if !c.admits(&img.meta, r) {
            return Err(format!("record {i} violates criteria"));
        }
    }
    if m.dt_s.abs() > c.max_dt_s as f64 {
        return Err(format!("dt {} exceeds {}", m.dt_s, c.max_dt_s));
    }
    let again = reduce(img, refs, &m.ref_indices, c).map_err(|e| e.to_string())?.expect("non-empty");
    if again.value != m.value || again.dt_s != m.dt_s || again.distance_km != m.distance_km {
        return Err("recomputed value differs".into());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        if width > 0.0 {
            for &v in values {
                let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
                counts[b] += 1;
            }
        } else if !values.is_empty() {
            counts[0] = values.len();
        }
        Self { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub images: usize,
    pub matched: usize,
    pub match_rate: f64,
    pub mean_abs_dt_s: Option<f64>,
    pub mean_distance_km: Option<f64>,
    pub max_distance_km: Option<f64>,
    pub mean_candidates: Option<f64>,
    pub dt_histogram: Histogram,
    pub distance_histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchupTable {
    pub criteria: ColocCriteria,
    pub rows: Vec<Matchup>,
    pub summary: MatchSummary,
}

pub fn build_matchup_table(images: &[ImageMeta], refs: &[RefMeasurement], c: &ColocCriteria) -> Result<MatchupTable> {
    let idx = SpatiotemporalIndex::build(refs);
    build_matchup_table_indexed(images, &idx, c)
}

/// Matches images in parallel; rows keep input image order.
pub fn build_matchup_table_indexed(
    images: &[ImageMeta],
    idx: &SpatiotemporalIndex<'_>,
    c: &ColocCriteria,
) -> Result<MatchupTable> {
    c.validate()?;
    let matched: Vec<Option<Matchup>> = images.par_iter().map(|img| match_image(img, idx, c)).collect::<Result<_>>()?;
    let rows: Vec<Matchup> = matched.into_iter().flatten().collect();
    let summary = summarize(images.len(), &rows, c);
    Ok(MatchupTable { criteria: c.clone(), rows, summary })
}

fn summarize(images: usize, rows: &[Matchup], c: &ColocCriteria) -> MatchSummary {
    let n = rows.len();
    let mean = |f: &dyn Fn(&Matchup) -> f64| (n > 0).then(|| rows.iter().map(f).sum::<f64>() / n as f64);
    let dts: Vec<f64> = rows.iter().map(|m| m.dt_s).collect();
    let dists: Vec<f64> = rows.iter().map(|m| m.distance_km).collect();
    let max_distance_km = dists.iter().copied().reduce(f64::max);
    let max_dt = c.max_dt_s as f64;
    MatchSummary {
        images,
        matched: n,
        match_rate: if images == 0 { 0.0 } else { n as f64 / images as f64 },
        mean_abs_dt_s: mean(&|m| m.dt_s.abs()),
        mean_distance_km: mean(&|m| m.distance_km),
        max_distance_km,
        mean_candidates: mean(&|m| m.n_candidates as f64),
        dt_histogram: Histogram::build(&dts, -max_dt, max_dt, 12),
        distance_histogram: Histogram::build(&dists, 0.0, max_distance_km.unwrap_or(0.0), 10),
    }
}

impl MatchupTable {
    /// `image_id,swh_m,dt_s,distance_km,n_candidates` or
    /// `image_id,wind_speed_ms,wind_dir_deg,dt_s,distance_km,n_candidates`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match self.criteria.target {
            RefKind::AltimeterSwh => w.write_record(["image_id", "swh_m", "dt_s", "distance_km", "n_candidates"])?,
            RefKind::ScatWind => {
                w.write_record(["image_id", "wind_speed_ms", "wind_dir_deg", "dt_s", "distance_km", "n_candidates"])?
            }
        }
        for m in &self.rows {
            let mut rec = vec![m.image_id.clone()];
            match m.value {
                MatchValue::Swh { swh_m } => rec.push(swh_m.to_string()),
                MatchValue::Wind { wind_speed_ms, wind_dir_deg } => {
                    rec.push(wind_speed_ms.to_string());
                    rec.push(wind_dir_deg.to_string());
                }
            }
            rec.extend([m.dt_s.to_string(), m.distance_km.to_string(), m.n_candidates.to_string()]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json_lines<W: Write>(&self, mut writer: W) -> Result<()> {
        for m in &self.rows {
            serde_json::to_writer(&mut writer, m).map_err(std::io::Error::from)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Label tables usable as probe targets: wave height in m, or wind
    /// speed in m/s plus direction in degrees.
    pub fn label_tables(&self) -> Vec<(&'static str, LabelTable)> {
        let ids: Vec<String> = self.rows.iter().map(|m| m.image_id.clone()).collect();
        let pick = |f: fn(&MatchValue) -> f64| self.rows.iter().map(|m| f(&m.value)).collect::<Vec<f64>>();
        let table = |labels| LabelTable::new(ids.clone(), labels).expect("matchup ids are unique");
        match self.criteria.target {
            RefKind::AltimeterSwh => vec![(
                "swh",
                table(Labels::Scalar {
                    unit: Unit::Meters,
                    values: pick(|v| if let MatchValue::Swh { swh_m } = v { *swh_m } else { unreachable!() }),
                }),
            )],
            RefKind::ScatWind => vec![
                (
                    "wind_speed",
                    table(Labels::Scalar {
                        unit: Unit::MetersPerSecond,
                        values: pick(|v| if let MatchValue::Wind { wind_speed_ms, .. } = v { *wind_speed_ms } else { unreachable!() }),
                    }),
                ),
                (
                    "wind_dir",
                    table(Labels::Angle {
                        values: pick(|v| if let MatchValue::Wind { wind_dir_deg, .. } = v { *wind_dir_deg } else { unreachable!() }),
                    }),
                ),
            ],
        }
    }
}
