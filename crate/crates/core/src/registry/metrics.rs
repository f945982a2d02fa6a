use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::circular::circular_error_deg;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("prediction count {preds} differs from truth count {truth}")]
    LengthMismatch { preds: usize, truth: usize },
    #[error("no values to score")]
    Empty,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, MetricError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    AccuracyPct,
    Rmse,
    Bias,
    Mae,
    CircularMaeDeg,
    CircularRmseDeg,
    F1AtIou,
}

/// Which way a column improves when ranking models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Better {
    Higher,
    Lower,
    /// Closer to zero.
    ZeroAbs,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::AccuracyPct => "accuracy_pct",
            MetricName::Rmse => "rmse",
            MetricName::Bias => "bias",
            MetricName::Mae => "mae",
            MetricName::CircularMaeDeg => "circular_mae_deg",
            MetricName::CircularRmseDeg => "circular_rmse_deg",
            MetricName::F1AtIou => "f1_at_iou",
        }
    }

    pub fn better(self) -> Better {
        match self {
            MetricName::AccuracyPct | MetricName::F1AtIou => Better::Higher,
            MetricName::Bias => Better::ZeroAbs,
            _ => Better::Lower,
        }
    }

    /// Decimal places used for display (full precision is kept alongside).
    pub fn display_precision(self) -> usize {
        match self {
            MetricName::AccuracyPct | MetricName::CircularMaeDeg | MetricName::CircularRmseDeg => 1,
            MetricName::Rmse | MetricName::Bias | MetricName::Mae => 2,
            MetricName::F1AtIou => 3,
        }
    }
}

/// A named score. `display_precision` may be omitted on input and then
/// defaults to the metric's usual precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawMetricValue")]
pub struct MetricValue {
    pub name: MetricName,
    pub value: f64,
    pub display_precision: usize,
}

#[derive(Deserialize)]
struct RawMetricValue {
    name: MetricName,
    value: f64,
    display_precision: Option<usize>,
}

impl From<RawMetricValue> for MetricValue {
    fn from(r: RawMetricValue) -> Self {
        Self { name: r.name, value: r.value, display_precision: r.display_precision.unwrap_or(r.name.display_precision()) }
    }
}

impl MetricValue {
    pub fn new(name: MetricName, value: f64) -> Self {
        Self { name, value, display_precision: name.display_precision() }
    }

    pub fn display(&self) -> String {
        format!("{:.*}", self.display_precision, self.value)
    }
}

fn check(preds: usize, truth: usize) -> Result<()> {
    if preds != truth {
        return Err(MetricError::LengthMismatch { preds, truth });
    }
    if preds == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn errors(preds: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    check(preds.len(), truth.len())?;
    preds
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (p, t))| if p.is_finite() && t.is_finite() { Ok(p - t) } else { Err(MetricError::NonFinite(i)) })
        .collect()
}

/// `100 · correct / total`.
pub fn accuracy_pct<T: PartialEq>(preds: &[T], truth: &[T]) -> Result<f64> {
    check(preds.len(), truth.len())?;
    let correct = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / preds.len() as f64)
}

pub fn rmse(preds: &[f64], truth: &[f64]) -> Result<f64> {
    let e = errors(preds, truth)?;
    Ok((e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt())
}

/// Mean signed error, `mean(pred - truth)`.
pub fn bias(preds: &[f64], truth: &[f64]) -> Result<f64> {
    let e = errors(preds, truth)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

pub fn mae(preds: &[f64], truth: &[f64]) -> Result<f64> {
    let e = errors(preds, truth)?;
    Ok(e.iter().map(|x| x.abs()).sum::<f64>() / e.len() as f64)
}

fn circular_errors(preds: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    errors(preds, truth)?;
    Ok(preds.iter().zip(truth).map(|(&p, &t)| circular_error_deg(p, t)).collect())
}

pub fn circular_mae_deg(preds: &[f64], truth: &[f64]) -> Result<f64> {
    let e = circular_errors(preds, truth)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

pub fn circular_rmse_deg(preds: &[f64], truth: &[f64]) -> Result<f64> {
    let e = circular_errors(preds, truth)?;
    Ok((e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt())
}
