use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RegistryError, Result};
use crate::coloc::ColocCriteria;
use crate::detect_eval::{DEFAULT_IOU_THRESH, DEFAULT_SCORE_THRESH};
use crate::embed_store::ClassSet;
use crate::registry::metrics::MetricName;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
    CircularRegression,
    Detection,
}

impl Task {
    fn admits(self, metric: MetricName) -> bool {
        use MetricName::*;
        match self {
            Task::Classification => metric == AccuracyPct,
            Task::Regression => matches!(metric, Rmse | Bias | Mae),
            Task::CircularRegression => matches!(metric, CircularMaeDeg | CircularRmseDeg),
            Task::Detection => metric == F1AtIou,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Each id is tested independently against the fraction; appending ids
    /// never moves old ones, and the test share is approximate.
    #[default]
    HashThreshold,
    /// The `round(fraction · n)` ids with the smallest hashes; exact size,
    /// but an appended id can displace an old one.
    HashRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    Explicit { train: Vec<String>, test: Vec<String> },
    Fraction {
        test_fraction: f64,
        seed: u64,
        #[serde(default)]
        mode: SplitMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColocPreset {
    StandardSwh,
    StandardWind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColocRef {
    Preset { preset: ColocPreset },
    Inline(ColocCriteria),
}

impl ColocRef {
    pub fn resolve(&self) -> ColocCriteria {
        match self {
            ColocRef::Preset { preset: ColocPreset::StandardSwh } => ColocCriteria::standard_swh(),
            ColocRef::Preset { preset: ColocPreset::StandardWind } => ColocCriteria::standard_wind(),
            ColocRef::Inline(c) => c.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionThresholds {
    #[serde(default = "default_iou")]
    pub iou_thresh: f64,
    #[serde(default = "default_score")]
    pub score_thresh: f64,
}

fn default_iou() -> f64 {
    DEFAULT_IOU_THRESH
}
fn default_score() -> f64 {
    DEFAULT_SCORE_THRESH
}

impl Default for DetectionThresholds {
    fn default() -> Self {
        Self { iou_thresh: DEFAULT_IOU_THRESH, score_thresh: DEFAULT_SCORE_THRESH }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkManifest {
    pub schema_version: u32,
    pub name: String,
    pub version: u32,
    pub task: Task,
    pub metric: MetricName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
    pub split: SplitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coloc: Option<ColocRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionThresholds>,
    /// Free-form notes such as sensor and acquisition period.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl BenchmarkManifest {
    pub fn class_set(&self) -> Option<std::result::Result<ClassSet, crate::embed_store::EmbedError>> {
        self.classes.as_ref().map(|c| ClassSet::new(c))
    }

    pub fn detection_thresholds(&self) -> DetectionThresholds {
        self.detection.unwrap_or_default()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Parses and validates a TOML manifest.
pub fn load_manifest(text: &str) -> Result<BenchmarkManifest> {
    let m: BenchmarkManifest = toml::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
    validate_manifest(&m).map_err(RegistryError::InvariantViolation)?;
    Ok(m)
}

fn duplicates(ids: &[String]) -> Option<&String> {
    let mut seen = HashSet::new();
    ids.iter().find(|id| !seen.insert(id.as_str()))
}

/// Every violated invariant, not just the first.
pub fn validate_manifest(m: &BenchmarkManifest) -> std::result::Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let mut bad = |field, message: String| v.push(Violation { field, message });
    if m.schema_version != SCHEMA_VERSION {
        bad("schema_version", format!("unsupported schema version {}, expected {SCHEMA_VERSION}", m.schema_version));
    }
    if m.name.trim().is_empty() {
        bad("name", "must not be empty".into());
    }
    if m.version == 0 {
        bad("version", "must be at least 1".into());
    }
    if !m.task.admits(m.metric) {
        bad("metric", format!("{} does not apply to a {:?} task", m.metric.as_str(), m.task));
    }
    match &m.split {
        SplitSpec::Explicit { train, test } => {
            if test.is_empty() {
                bad("split.test", "must list at least one id".into());
            }
            if train.is_empty() {
                bad("split.train", "must list at least one id".into());
            }
            if let Some(id) = duplicates(train) {
                bad("split.train", format!("id {id:?} listed twice"));
            }
            if let Some(id) = duplicates(test) {
                bad("split.test", format!("id {id:?} listed twice"));
            }
            let train_ids: HashSet<&str> = train.iter().map(String::as_str).collect();
            let shared: Vec<&str> = test.iter().map(String::as_str).filter(|id| train_ids.contains(id)).collect();
            if !shared.is_empty() {
                bad("split", format!("train and test share {} id(s), first {:?}", shared.len(), shared[0]));
            }
        }
        SplitSpec::Fraction { test_fraction, .. } => {
            if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                bad("split.test_fraction", format!("{test_fraction} is not in (0, 1)"));
            }
        }
    }
    if let Some(classes) = &m.classes {
        if let Err(e) = ClassSet::new(classes) {
            bad("classes", e.to_string());
        }
    }
    if m.task == Task::Classification && m.classes.is_none() {
        bad("classes", "classification benchmarks must declare their classes".into());
    }
    if let Some(c) = &m.coloc {
        if let Err(e) = c.resolve().validate() {
            bad("coloc", e.to_string());
        }
    }
    if let Some(d) = &m.detection {
        if m.task != Task::Detection {
            bad("detection", "thresholds only apply to detection benchmarks".into());
        }
        for (name, t) in [("iou_thresh", d.iou_thresh), ("score_thresh", d.score_thresh)] {
            if !(0.0..=1.0).contains(&t) {
                bad("detection", format!("{name} {t} is not in [0, 1]"));
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializedSplit {
    /// Input order is kept on both sides.
    pub train: Vec<String>,
    pub test: Vec<String>,
    /// Ids present in the dataset but named by neither explicit list.
    pub unassigned: Vec<String>,
}

/// Position of `id` on the unit interval for a given seed.
pub fn split_hash(seed: u64, id: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let d = h.finalize();
    let x = u64::from_be_bytes(d[..8].try_into().expect("8 bytes"));
    // top 53 bits, exactly representable
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// Assigns `ids` to train/test. A pure function of the id set, the split
/// spec and its seed: reordering `ids` only reorders the output lists.
pub fn materialize_split(split: &SplitSpec, ids: &[String]) -> Result<MaterializedSplit> {
    if let Some(id) = duplicates(ids) {
        return Err(RegistryError::DuplicateId(id.clone()));
    }
    let mut out = MaterializedSplit { train: Vec::new(), test: Vec::new(), unassigned: Vec::new() };
    match split {
        SplitSpec::Explicit { train, test } => {
            let train: HashSet<&str> = train.iter().map(String::as_str).collect();
            let test: HashSet<&str> = test.iter().map(String::as_str).collect();
            for id in ids {
                if test.contains(id.as_str()) {
                    out.test.push(id.clone());
                } else if train.contains(id.as_str()) {
                    out.train.push(id.clone());
                } else {
                    out.unassigned.push(id.clone());
                }
            }
        }
        SplitSpec::Fraction { test_fraction, seed, mode } => {
            let hashes: Vec<f64> = ids.iter().map(|id| split_hash(*seed, id)).collect();
            let is_test: Vec<bool> = match mode {
                SplitMode::HashThreshold => hashes.iter().map(|&h| h < *test_fraction).collect(),
                SplitMode::HashRank => {
                    let k = (test_fraction * ids.len() as f64).round() as usize;
                    let mut order: Vec<usize> = (0..ids.len()).collect();
                    order.sort_by(|&a, &b| hashes[a].total_cmp(&hashes[b]).then_with(|| ids[a].cmp(&ids[b])));
                    let mut flags = vec![false; ids.len()];
                    for &i in &order[..k] {
                        flags[i] = true;
                    }
                    flags
                }
            };
            for (id, t) in ids.iter().zip(is_test) {
                if t {
                    out.test.push(id.clone());
                } else {
                    out.train.push(id.clone());
                }
            }
        }
    }
    Ok(out)
}

/// Manifests grouped by name; each name's versions must strictly increase.
#[derive(Debug, Clone, Default)]
pub struct ManifestRegistry {
    by_name: BTreeMap<String, Vec<BenchmarkManifest>>,
}

impl ManifestRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, m: BenchmarkManifest) -> Result<()> {
        validate_manifest(&m).map_err(RegistryError::InvariantViolation)?;
        let revisions = self.by_name.entry(m.name.clone()).or_default();
        if let Some(last) = revisions.last() {
            if m.version <= last.version {
                return Err(RegistryError::VersionNotIncreasing { name: m.name, previous: last.version, found: m.version });
            }
        }
        revisions.push(m);
        Ok(())
    }

    pub fn latest(&self, name: &str) -> Option<&BenchmarkManifest> {
        self.by_name.get(name).and_then(|v| v.last())
    }

    pub fn get(&self, name: &str, version: u32) -> Option<&BenchmarkManifest> {
        self.by_name.get(name)?.iter().find(|m| m.version == version)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }
}
