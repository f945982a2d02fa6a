use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{EmbedError, Result};
use crate::detect_eval::BBox;

/// The ten TenGeoP categories, in declaration order.
pub const TENGEOP_CLASSES: [&str; 10] = [
    "pure_ocean_waves",
    "wind_streaks",
    "micro_convective_cells",
    "rain_cells",
    "biological_slicks",
    "sea_ice",
    "icebergs",
    "low_wind_area",
    "atmospheric_front",
    "oceanic_front",
];

/// Declared class names. Declaration order doubles as the tie-break order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassSet {
    names: Vec<String>,
}

fn canonical(name: &str) -> String {
    name.trim().to_lowercase().replace([' ', '-'], "_")
}

impl ClassSet {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|n| canonical(n.as_ref())).collect();
        if names.is_empty() {
            return Err(EmbedError::LabelParse { line: 0, msg: "class set is empty".into() });
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || names[..i].contains(n) {
                return Err(EmbedError::LabelParse { line: 0, msg: format!("invalid or repeated class {n:?}") });
            }
        }
        Ok(Self { names })
    }

    pub fn tengeop() -> Self {
        Self { names: TENGEOP_CLASSES.iter().map(|s| s.to_string()).collect() }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Case-insensitive; spaces and hyphens match underscores.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let c = canonical(name);
        self.names.iter().position(|n| *n == c)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "m")]
    Meters,
    #[serde(rename = "m/s")]
    MetersPerSecond,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Meters => "m",
            Unit::MetersPerSecond => "m/s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Class,
    Scalar,
    Angle,
    Boxes,
}

/// One label column; exactly one kind per table.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Class { classes: ClassSet, values: Vec<usize> },
    Scalar { unit: Unit, values: Vec<f64> },
    /// Degrees in `[0, 360)`.
    Angle { values: Vec<f64> },
    Boxes { values: Vec<Vec<BBox>> },
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class { values, .. } => values.len(),
            Labels::Scalar { values, .. } | Labels::Angle { values } => values.len(),
            Labels::Boxes { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> LabelKind {
        match self {
            Labels::Class { .. } => LabelKind::Class,
            Labels::Scalar { .. } => LabelKind::Scalar,
            Labels::Angle { .. } => LabelKind::Angle,
            Labels::Boxes { .. } => LabelKind::Boxes,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
            idx.iter().map(|&i| v[i].clone()).collect()
        }
        match self {
            Labels::Class { classes, values } => Labels::Class { classes: classes.clone(), values: pick(values, indices) },
            Labels::Scalar { unit, values } => Labels::Scalar { unit: *unit, values: pick(values, indices) },
            Labels::Angle { values } => Labels::Angle { values: pick(values, indices) },
            Labels::Boxes { values } => Labels::Boxes { values: pick(values, indices) },
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Labels::Class { classes, values } => {
                if let Some(i) = values.iter().position(|&c| c >= classes.len()) {
                    return Err(EmbedError::LabelParse { line: i, msg: format!("class index {} out of range", values[i]) });
                }
            }
            Labels::Scalar { values, .. } => {
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(EmbedError::LabelParse { line: i, msg: "non-finite scalar".into() });
                }
            }
            Labels::Angle { values } => {
                if let Some(i) = values.iter().position(|v| !(0.0..360.0).contains(v)) {
                    return Err(EmbedError::LabelParse { line: i, msg: format!("angle {} outside [0, 360)", values[i]) });
                }
            }
            Labels::Boxes { .. } => {}
        }
        Ok(())
    }
}

/// `image_id → label`.
#[derive(Debug, Clone)]
pub struct LabelTable {
    ids: Vec<String>,
    labels: Labels,
    index: HashMap<String, usize>,
}

impl PartialEq for LabelTable {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids && self.labels == other.labels
    }
}

enum RowLabel {
    Class(usize),
    Scalar(Unit, f64),
    Angle(f64),
}

impl LabelTable {
    pub fn new(ids: Vec<String>, labels: Labels) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(EmbedError::LengthMismatch { expected: ids.len(), found: labels.len() });
        }
        labels.validate()?;
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(EmbedError::DuplicateImageId(id.clone()));
            }
        }
        Ok(Self { ids, labels, index })
    }

    pub fn from_boxes(entries: Vec<(String, Vec<BBox>)>) -> Result<Self> {
        let (ids, values) = entries.into_iter().unzip();
        Self::new(ids, Labels::Boxes { values })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Reads `image_id,label[,unit]`. Rows without a unit are class names
    /// resolved against `classes`; unit `m` or `m/s` marks a scalar and
    /// `deg` an angle.
    pub fn read_csv<R: Read>(reader: R, classes: &ClassSet) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if !(cols == ["image_id", "label"] || cols == ["image_id", "label", "unit"]) {
            return Err(EmbedError::LabelParse { line: 1, msg: format!("unexpected header {cols:?}") });
        }
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let bad = |msg: String| EmbedError::LabelParse { line, msg };
            if rec.len() < 2 || rec.len() > cols.len() {
                return Err(bad(format!("expected {} fields, got {}", cols.len(), rec.len())));
            }
            let label = &rec[1];
            let unit = rec.get(2).unwrap_or("");
            let parse_num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            let row = match unit {
                "" => RowLabel::Class(
                    classes.index_of(label).ok_or_else(|| EmbedError::UnknownClass { line, name: label.to_string() })?,
                ),
                "m" => RowLabel::Scalar(Unit::Meters, parse_num(label)?),
                "m/s" => RowLabel::Scalar(Unit::MetersPerSecond, parse_num(label)?),
                "deg" => {
                    let v = parse_num(label)?;
                    if !(0.0..360.0).contains(&v) {
                        return Err(bad(format!("angle {v} outside [0, 360)")));
                    }
                    RowLabel::Angle(v)
                }
                other => return Err(bad(format!("unknown unit {other:?}"))),
            };
            if let Some(first) = rows.first() {
                let same = match (first, &row) {
                    (RowLabel::Class(_), RowLabel::Class(_)) | (RowLabel::Angle(_), RowLabel::Angle(_)) => true,
                    (RowLabel::Scalar(a, _), RowLabel::Scalar(b, _)) => a == b,
                    _ => false,
                };
                if !same {
                    return Err(EmbedError::MixedLabelKinds { line });
                }
            }
            ids.push(rec[0].to_string());
            rows.push(row);
        }
        let labels = match rows.first() {
            None | Some(RowLabel::Class(_)) => Labels::Class {
                classes: classes.clone(),
                values: rows.iter().map(|r| if let RowLabel::Class(c) = r { *c } else { unreachable!() }).collect(),
            },
            Some(RowLabel::Scalar(unit, _)) => Labels::Scalar {
                unit: *unit,
                values: rows.iter().map(|r| if let RowLabel::Scalar(_, v) = r { *v } else { unreachable!() }).collect(),
            },
            Some(RowLabel::Angle(_)) => Labels::Angle {
                values: rows.iter().map(|r| if let RowLabel::Angle(v) = r { *v } else { unreachable!() }).collect(),
            },
        };
        Self::new(ids, labels)
    }

    /// Canonical CSV form. Box tables have no CSV label form here; they live
    /// in detection files.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match &self.labels {
            Labels::Class { classes, values } => {
                w.write_record(["image_id", "label"])?;
                for (id, &c) in self.ids.iter().zip(values) {
                    w.write_record([id.as_str(), classes.name(c)])?;
                }
            }
            Labels::Scalar { unit, values } => {
                w.write_record(["image_id", "label", "unit"])?;
                for (id, v) in self.ids.iter().zip(values) {
                    w.write_record([id.as_str(), &v.to_string(), unit.as_str()])?;
                }
            }
            Labels::Angle { values } => {
                w.write_record(["image_id", "label", "unit"])?;
                for (id, v) in self.ids.iter().zip(values) {
                    w.write_record([id.as_str(), &v.to_string(), "deg"])?;
                }
            }
            Labels::Boxes { .. } => {
                return Err(EmbedError::LabelParse { line: 0, msg: "box labels are written as detection CSV".into() })
            }
        }
        w.flush()?;
        Ok(())
    }
}
