//! Detection scoring: IoU, score-thresholded greedy matching and F1.
//!
//! Boxes use continuous pixel coordinates with area
//! `(x_max - x_min) * (y_max - y_min)`.

use std::collections::BTreeMap;
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_IOU_THRESH: f64 = 0.1;
pub const DEFAULT_SCORE_THRESH: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("invalid box {0:?}: needs x_max > x_min, y_max > y_min, finite coordinates and score in [0, 1]")]
    InvalidBox(BBox),
    #[error("threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("nothing to evaluate: no predictions and no ground truth")]
    EmptyEvaluation,
    #[error("detection CSV line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DetectError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, score: Option<f64>) -> Result<Self> {
        let b = Self { x_min, y_min, x_max, y_max, score };
        let coords_ok = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        let score_ok = score.is_none_or(|s| (0.0..=1.0).contains(&s));
        if coords_ok && x_max > x_min && y_max > y_min && score_ok {
            Ok(b)
        } else {
            Err(DetectError::InvalidBox(b))
        }
    }

    pub fn gt(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        Self::new(x_min, y_min, x_max, y_max, None)
    }

    pub fn pred(x_min: f64, y_min: f64, x_max: f64, y_max: f64, score: f64) -> Result<Self> {
        Self::new(x_min, y_min, x_max, y_max, Some(score))
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    /// Predictions without a score are treated as fully confident.
    fn confidence(&self) -> f64 {
        self.score.unwrap_or(1.0)
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

impl Counts {
    pub fn f1(&self) -> Result<f64> {
        f1(self.tp, self.fp, self.fn_)
    }

    pub fn precision(&self) -> Option<f64> {
        (self.tp + self.fp > 0).then(|| self.tp as f64 / (self.tp + self.fp) as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        (self.tp + self.fn_ > 0).then(|| self.tp as f64 / (self.tp + self.fn_) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub counts: Counts,
    /// `(prediction index, ground-truth index, iou)` in matching order.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Greedy score-descending matching.
///
/// Predictions scoring below `score_thresh` are dropped. Survivors are
/// visited by descending score (input order on ties); each takes the
/// still-unmatched ground truth of highest IoU, provided that IoU is at
/// least `iou_thresh`. Equal IoUs go to the lowest ground-truth index.
pub fn match_detections(preds: &[BBox], gts: &[BBox], iou_thresh: f64, score_thresh: f64) -> MatchOutcome {
    let mut order: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].confidence() >= score_thresh).collect();
    order.sort_by(|&a, &b| preds[b].confidence().total_cmp(&preds[a].confidence()));

    let mut taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for &p in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&preds[p], gt);
            if v >= iou_thresh && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            taken[g] = true;
            pairs.push((p, g, v));
        }
    }
    let tp = pairs.len();
    MatchOutcome { counts: Counts { tp, fp: order.len() - tp, fn_: gts.len() - tp }, pairs }
}

/// `2TP / (2TP + FP + FN)`; an all-zero count has no defined F1.
pub fn f1(tp: usize, fp: usize, fn_: usize) -> Result<f64> {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return Err(DetectError::EmptyEvaluation);
    }
    Ok(2.0 * tp as f64 / denom as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub predictions: Vec<BBox>,
    pub ground_truth: Vec<BBox>,
}

/// Per-image predictions and ground truth, keyed and iterated in id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    pub images: BTreeMap<String, ImageDetections>,
}

fn read_boxes<R: Read>(reader: R, with_score: bool) -> Result<Vec<(String, BBox)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let expected: &[&str] = if with_score {
        &["image_id", "x_min", "y_min", "x_max", "y_max", "score"]
    } else {
        &["image_id", "x_min", "y_min", "x_max", "y_max"]
    };
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != expected {
        return Err(DetectError::Parse { line: 1, msg: format!("expected header {expected:?}, got {header:?}") });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| {
            rec[i].parse::<f64>().map_err(|e| DetectError::Parse { line, msg: format!("{:?}: {e}", &rec[i]) })
        };
        let score = if with_score { Some(num(5)?) } else { None };
        let b = BBox::new(num(1)?, num(2)?, num(3)?, num(4)?, score)
            .map_err(|e| DetectError::Parse { line, msg: e.to_string() })?;
        out.push((rec[0].to_string(), b));
    }
    Ok(out)
}

impl DetectionSet {
    /// Reads prediction CSV (`image_id,x_min,y_min,x_max,y_max,score`) and
    /// ground-truth CSV (same without `score`). Images listed in either file
    /// are evaluated.
    pub fn read_csv<P: Read, G: Read>(predictions: P, ground_truth: G) -> Result<Self> {
        let mut set = Self::default();
        for (id, b) in read_boxes(predictions, true)? {
            set.images.entry(id).or_default().predictions.push(b);
        }
        for (id, b) in read_boxes(ground_truth, false)? {
            set.images.entry(id).or_default().ground_truth.push(b);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: String,
    #[serde(flatten)]
    pub counts: Counts,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub score_thresh: f64,
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub iou_thresh: f64,
    pub score_thresh: f64,
    pub images: usize,
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// F1 on counts summed over all images.
    pub f1_micro: f64,
    /// Mean of per-image F1 over images with any box.
    pub f1_macro: f64,
    pub per_image: Vec<ImageRow>,
    pub pr_curve: Vec<PrPoint>,
}

/// Score thresholds of the precision/recall sweep: 0, 0.05, …, 1.
pub fn pr_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

pub fn evaluate_detection_benchmark(set: &DetectionSet, iou_thresh: f64, score_thresh: f64) -> Result<DetectionReport> {
    for t in [iou_thresh, score_thresh] {
        if !(0.0..=1.0).contains(&t) {
            return Err(DetectError::ThresholdOutOfRange(t));
        }
    }
    let images: Vec<(&String, &ImageDetections)> = set.images.iter().collect();
    let per_image: Vec<ImageRow> = images
        .par_iter()
        .map(|(id, d)| {
            let counts = match_detections(&d.predictions, &d.ground_truth, iou_thresh, score_thresh).counts;
            ImageRow { image_id: (*id).clone(), counts, f1: counts.f1().ok() }
        })
        .collect();

    let mut total = Counts::default();
    for row in &per_image {
        total += row.counts;
    }
    let f1_micro = total.f1()?;
    let defined: Vec<f64> = per_image.iter().filter_map(|r| r.f1).collect();
    let f1_macro = defined.iter().sum::<f64>() / defined.len() as f64;

    let pr_curve = pr_thresholds()
        .into_iter()
        .map(|t| {
            let mut c = Counts::default();
            for (_, d) in &images {
                c += match_detections(&d.predictions, &d.ground_truth, iou_thresh, t).counts;
            }
            PrPoint { score_thresh: t, counts: c, precision: c.precision(), recall: c.recall() }
        })
        .collect();

    Ok(DetectionReport {
        iou_thresh,
        score_thresh,
        images: per_image.len(),
        counts: total,
        precision: total.precision(),
        recall: total.recall(),
        f1_micro,
        f1_macro,
        per_image,
        pr_curve,
    })
}
