//! Zero-shot and lightweight probes on frozen embeddings: exact kNN
//! classification/regression and closed-form ridge models.

mod knn;
mod ridge;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circular::vector_mean_deg;
use crate::digest::labeled_set_digest;
use crate::embed_store::{LabelKind, LabeledSet, Labels};
use crate::registry::metrics::{self, MetricError, MetricName, MetricValue};

pub use knn::{classify_from, knn_classify, knn_regress, regress_from, vote_weights, KnnIndex, Neighbor};
pub use ridge::{circular_fit, circular_predict, ridge_fit, ridge_predict, CircularModel, RidgeModel};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("zero-norm vector cannot be used with the cosine metric")]
    ZeroVector,
    #[error("non-finite value in design matrix or targets")]
    NonFinite,
    #[error("normal equations are singular; set lambda > 0")]
    SingularSystem,
    #[error("predicted sin/cos pair has (near) zero length")]
    DegeneratePrediction,
    #[error("image id {0:?} is in both train and test sets")]
    SplitOverlap(String),
    #[error("probe {probe} cannot use {labels:?} labels")]
    LabelKindMismatch { probe: &'static str, labels: LabelKind },
    #[error("invalid probe config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T> = std::result::Result<T, ProbeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    KnnClassify,
    KnnRegress,
    Ridge,
    RidgeCircular,
}

impl ProbeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::KnnClassify => "knn_classify",
            ProbeKind::KnnRegress => "knn_regress",
            ProbeKind::Ridge => "ridge",
            ProbeKind::RidgeCircular => "ridge_circular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    Softmax { temperature: f64 },
}

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_TEMPERATURE: f64 = 0.07;
pub const DEFAULT_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_metric")]
    pub metric: DistanceMetric,
    #[serde(default = "default_weighting")]
    pub weighting: Weighting,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_k() -> usize {
    DEFAULT_K
}
fn default_metric() -> DistanceMetric {
    DistanceMetric::Cosine
}
fn default_weighting() -> Weighting {
    Weighting::Softmax { temperature: DEFAULT_TEMPERATURE }
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

impl ProbeConfig {
    pub fn new(kind: ProbeKind) -> Self {
        Self { kind, k: DEFAULT_K, metric: default_metric(), weighting: default_weighting(), lambda: DEFAULT_LAMBDA }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(ProbeError::InvalidConfig("k must be at least 1".into()));
        }
        if let Weighting::Softmax { temperature } = self.weighting {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(ProbeError::InvalidConfig(format!("softmax temperature {temperature} must be > 0")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ProbeError::InvalidConfig(format!("lambda {} must be >= 0", self.lambda)));
        }
        Ok(())
    }
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self::new(ProbeKind::KnnClassify)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    Class(String),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborRef {
    pub image_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub image_id: String,
    pub prediction: Prediction,
    pub truth: Prediction,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub neighbors: Vec<NeighborRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Ridge(RidgeModel),
    RidgeCircular(CircularModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub config: ProbeConfig,
    pub seed: u64,
    /// Whether vectors were unit-normalized before neighbour search.
    pub l2_normalized: bool,
    pub train_digest: String,
    pub test_digest: String,
    pub n_train: usize,
    pub n_test: usize,
    pub queries: Vec<QueryResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<FittedModel>,
    pub metrics: Vec<MetricValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub const ZERO_SHOT_DIRECTION_NOTE: &str =
    "wind direction scored with a zero-shot probe on frozen embeddings, not a fine-tuned head";

fn check_split(train: &LabeledSet, test: &LabeledSet) -> Result<()> {
    if train.is_empty() {
        return Err(ProbeError::EmptyTrainSet);
    }
    if test.is_empty() {
        return Err(ProbeError::EmptyTestSet);
    }
    if train.dim() != test.dim() {
        return Err(ProbeError::DimMismatch { expected: train.dim(), found: test.dim() });
    }
    let seen: HashSet<&str> = train.ids().iter().map(String::as_str).collect();
    if let Some(id) = test.ids().iter().find(|id| seen.contains(id.as_str())) {
        return Err(ProbeError::SplitOverlap(id.clone()));
    }
    let compatible = match (train.labels(), test.labels()) {
        (Labels::Class { classes: a, .. }, Labels::Class { classes: b, .. }) => a == b,
        (Labels::Scalar { unit: a, .. }, Labels::Scalar { unit: b, .. }) => a == b,
        (Labels::Angle { .. }, Labels::Angle { .. }) => true,
        _ => false,
    };
    if !compatible {
        return Err(ProbeError::InvalidConfig(format!(
            "train labels {:?} and test labels {:?} are not comparable",
            train.labels().kind(),
            test.labels().kind()
        )));
    }
    Ok(())
}

fn design(set: &LabeledSet) -> Vec<f64> {
    set.vectors().iter().map(|&v| v as f64).collect()
}

fn scalar_metrics(pred: &[f64], truth: &[f64]) -> Result<Vec<MetricValue>> {
    Ok(vec![
        MetricValue::new(MetricName::Rmse, metrics::rmse(pred, truth)?),
        MetricValue::new(MetricName::Bias, metrics::bias(pred, truth)?),
        MetricValue::new(MetricName::Mae, metrics::mae(pred, truth)?),
    ])
}

fn angle_metrics(pred: &[f64], truth: &[f64]) -> Result<Vec<MetricValue>> {
    Ok(vec![
        MetricValue::new(MetricName::CircularMaeDeg, metrics::circular_mae_deg(pred, truth)?),
        MetricValue::new(MetricName::CircularRmseDeg, metrics::circular_rmse_deg(pred, truth)?),
    ])
}

fn values(v: &[f64]) -> Vec<Prediction> {
    v.iter().map(|&x| Prediction::Value(x)).collect()
}

/// Fits or indexes on `train`, predicts every item of `test`, and scores
/// the predictions. Queries are evaluated in parallel; results and metric
/// reductions keep test-set order.
pub fn run_probe_benchmark(train: &LabeledSet, test: &LabeledSet, cfg: &ProbeConfig, seed: u64) -> Result<ProbeResult> {
    cfg.validate()?;
    check_split(train, test)?;
    let mut notes = Vec::new();
    let mut model = None;
    let mut neighbors: Vec<Vec<Neighbor>> = Vec::new();
    let (predictions, truth, metric_values) = match cfg.kind {
        ProbeKind::KnnClassify | ProbeKind::KnnRegress => {
            let index = KnnIndex::new(train, cfg.metric)?;
            neighbors = index.neighbors_batch(test.vectors(), cfg.k)?;
            match (cfg.kind, train.labels(), test.labels()) {
                (ProbeKind::KnnClassify, Labels::Class { classes, values: tr }, Labels::Class { values: te, .. }) => {
                    let pred: Vec<usize> =
                        neighbors.par_iter().map(|nb| classify_from(nb, tr, classes.len(), cfg.weighting).0).collect();
                    let acc = metrics::accuracy_pct(&pred, te)?;
                    let name = |c: &usize| Prediction::Class(classes.name(*c).to_string());
                    (pred.iter().map(name).collect(), te.iter().map(name).collect(), vec![MetricValue::new(MetricName::AccuracyPct, acc)])
                }
                (ProbeKind::KnnRegress, Labels::Scalar { values: tr, .. }, Labels::Scalar { values: te, .. }) => {
                    let pred: Vec<f64> = neighbors.par_iter().map(|nb| regress_from(nb, tr, cfg.weighting)).collect();
                    let m = scalar_metrics(&pred, te)?;
                    (values(&pred), values(te), m)
                }
                (ProbeKind::KnnRegress, Labels::Angle { values: tr }, Labels::Angle { values: te }) => {
                    let pred: Vec<f64> = neighbors
                        .par_iter()
                        .map(|nb| {
                            let angles: Vec<f64> = nb.iter().map(|n| tr[n.index]).collect();
                            let w = vote_weights(nb, cfg.weighting);
                            vector_mean_deg(&angles, Some(&w)).ok_or(ProbeError::DegeneratePrediction)
                        })
                        .collect::<Result<_>>()?;
                    notes.push(ZERO_SHOT_DIRECTION_NOTE.to_string());
                    let m = angle_metrics(&pred, te)?;
                    (values(&pred), values(te), m)
                }
                (kind, labels, _) => {
                    return Err(ProbeError::LabelKindMismatch { probe: kind.as_str(), labels: labels.kind() });
                }
            }
        }
        ProbeKind::Ridge => {
            let (Labels::Scalar { values: tr, .. }, Labels::Scalar { values: te, .. }) = (train.labels(), test.labels()) else {
                return Err(ProbeError::LabelKindMismatch { probe: "ridge", labels: train.labels().kind() });
            };
            let fitted = ridge_fit(&design(train), train.dim(), tr, cfg.lambda)?;
            let pred = ridge_predict(&fitted, &design(test))?;
            model = Some(FittedModel::Ridge(fitted));
            let m = scalar_metrics(&pred, te)?;
            (values(&pred), values(te), m)
        }
        ProbeKind::RidgeCircular => {
            let (Labels::Angle { values: tr }, Labels::Angle { values: te }) = (train.labels(), test.labels()) else {
                return Err(ProbeError::LabelKindMismatch { probe: "ridge_circular", labels: train.labels().kind() });
            };
            let fitted = circular_fit(&design(train), train.dim(), tr, cfg.lambda)?;
            let pred = circular_predict(&fitted, &design(test))?;
            model = Some(FittedModel::RidgeCircular(fitted));
            notes.push(ZERO_SHOT_DIRECTION_NOTE.to_string());
            let m = angle_metrics(&pred, te)?;
            (values(&pred), values(te), m)
        }
    };

    let queries = predictions
        .into_iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (prediction, truth))| QueryResult {
            image_id: test.ids()[i].clone(),
            prediction,
            truth,
            neighbors: neighbors
                .get(i)
                .map(|nb| nb.iter().map(|n| NeighborRef { image_id: train.ids()[n.index].clone(), score: n.score }).collect())
                .unwrap_or_default(),
        })
        .collect();

    let is_knn = matches!(cfg.kind, ProbeKind::KnnClassify | ProbeKind::KnnRegress);
    Ok(ProbeResult {
        config: cfg.clone(),
        seed,
        l2_normalized: is_knn && cfg.metric == DistanceMetric::Cosine,
        train_digest: labeled_set_digest(train),
        test_digest: labeled_set_digest(test),
        n_train: train.len(),
        n_test: test.len(),
        queries,
        model,
        metrics: metric_values,
        notes,
    })
}
