//! Diversity-based subset selection (k-center greedy / farthest-point
//! sampling) and a periodic re-selection schedule simulator.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed_store::{l2_normalize, EmbeddingSet};

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("target size {target} exceeds dataset size {n}")]
    TargetTooLarge { target: usize, n: usize },
    #[error("invalid prune config: {0}")]
    InvalidConfig(String),
    #[error("selection is empty")]
    EmptySelection,
    #[error("embedding {index} has zero norm; cosine distance is undefined")]
    ZeroVector { index: usize },
    #[error("epoch {epoch} has {found} embeddings, expected {expected}")]
    SizeMismatch { epoch: usize, expected: usize, found: usize },
    #[error("selected index {0} is out of range")]
    IndexOutOfRange(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PruneError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMetric {
    /// `1 − cos(a, b)`.
    CosineDistance,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStrategy {
    FixedIndex(usize),
    /// Point with the smallest summed distance to all others; lowest index on ties.
    Medoid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneConfig {
    pub target_size: usize,
    #[serde(default = "default_metric")]
    pub metric: PruneMetric,
    #[serde(default = "default_seed")]
    pub seed_strategy: SeedStrategy,
    /// Epochs between re-selections.
    #[serde(default = "default_period")]
    pub reselect_period: usize,
}

fn default_metric() -> PruneMetric {
    PruneMetric::CosineDistance
}
fn default_seed() -> SeedStrategy {
    SeedStrategy::Medoid
}
fn default_period() -> usize {
    1
}

impl PruneConfig {
    pub fn new(target_size: usize) -> Self {
        Self { target_size, metric: default_metric(), seed_strategy: default_seed(), reselect_period: default_period() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return Err(PruneError::InvalidConfig("target_size must be at least 1".into()));
        }
        if self.reselect_period == 0 {
            return Err(PruneError::InvalidConfig("reselect_period must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    /// Selected rows, in selection order.
    pub selected: Vec<usize>,
    /// Distance from each pick to the earlier selection; `None` for the seed.
    pub min_distance_at_selection: Vec<Option<f64>>,
    pub coverage_radius: f64,
}

/// Embeddings widened to f64 (and unit-normalized for cosine distance).
struct Points {
    dim: usize,
    data: Vec<f64>,
    metric: PruneMetric,
}

impl Points {
    fn new(set: &EmbeddingSet, metric: PruneMetric) -> Result<Self> {
        let dim = set.dim();
        let mut data = Vec::with_capacity(set.len() * dim);
        for i in 0..set.len() {
            let v: Vec<f64> = set.vector(i).iter().map(|&x| x as f64).collect();
            match metric {
                PruneMetric::CosineDistance => data.extend(l2_normalize(&v).map_err(|_| PruneError::ZeroVector { index: i })?),
                PruneMetric::Euclidean => data.extend(v),
            }
        }
        Ok(Self { dim, data, metric })
    }

    fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row(i), self.row(j));
        match self.metric {
            PruneMetric::CosineDistance => {
                let mut dot = 0f64;
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                }
                (1.0 - dot).max(0.0)
            }
            PruneMetric::Euclidean => {
                let mut s = 0f64;
                for (x, y) in a.iter().zip(b) {
                    s += (x - y) * (x - y);
                }
                s.sqrt()
            }
        }
    }

    fn medoid(&self) -> usize {
        let n = self.len();
        let sums: Vec<f64> = (0..n).into_par_iter().map(|i| (0..n).map(|j| self.dist(i, j)).sum()).collect();
        argmin_lowest(&sums)
    }
}

fn argmin_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Farthest unselected point; ties resolve to the lowest index.
fn farthest(min_dist: &[f64], taken: &[bool]) -> Option<(usize, f64)> {
    min_dist
        .par_iter()
        .enumerate()
        .filter(|(i, _)| !taken[*i])
        .map(|(i, &d)| (i, d))
        .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
}

fn greedy(points: &Points, cfg: &PruneConfig) -> Result<PruneResult> {
    cfg.validate()?;
    let n = points.len();
    if cfg.target_size > n {
        return Err(PruneError::TargetTooLarge { target: cfg.target_size, n });
    }
    let seed = match cfg.seed_strategy {
        SeedStrategy::FixedIndex(i) if i >= n => return Err(PruneError::IndexOutOfRange(i)),
        SeedStrategy::FixedIndex(i) => i,
        SeedStrategy::Medoid => points.medoid(),
    };
    let mut taken = vec![false; n];
    let mut min_dist = vec![f64::INFINITY; n];
    let mut selected = vec![seed];
    let mut at_selection = vec![None];
    let add = |c: usize, taken: &mut [bool], min_dist: &mut [f64]| {
        taken[c] = true;
        min_dist.par_iter_mut().enumerate().for_each(|(i, d)| *d = d.min(points.dist(i, c)));
    };
    add(seed, &mut taken, &mut min_dist);
    while selected.len() < cfg.target_size {
        let (c, d) = farthest(&min_dist, &taken).expect("target_size <= n leaves a candidate");
        selected.push(c);
        at_selection.push(Some(d));
        add(c, &mut taken, &mut min_dist);
    }
    let coverage_radius = min_dist.iter().copied().fold(0.0, f64::max);
    Ok(PruneResult { selected, min_distance_at_selection: at_selection, coverage_radius })
}

/// k-center greedy: seed per `cfg.seed_strategy`, then repeatedly add the
/// point farthest from the current selection.
pub fn kcenter_greedy(set: &EmbeddingSet, cfg: &PruneConfig) -> Result<PruneResult> {
    greedy(&Points::new(set, cfg.metric)?, cfg)
}

/// Max over all points of the distance to the nearest selected point.
pub fn coverage_radius(selected: &[usize], set: &EmbeddingSet, metric: PruneMetric) -> Result<f64> {
    if selected.is_empty() {
        return Err(PruneError::EmptySelection);
    }
    if let Some(&bad) = selected.iter().find(|&&s| s >= set.len()) {
        return Err(PruneError::IndexOutOfRange(bad));
    }
    let points = Points::new(set, metric)?;
    Ok((0..points.len())
        .into_par_iter()
        .map(|i| selected.iter().map(|&s| points.dist(i, s)).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSelection {
    pub epoch: usize,
    pub reselected: bool,
    pub selected: Vec<usize>,
    /// Radius of the active subset under this epoch's embeddings.
    pub coverage_radius: f64,
}

/// Re-selects on epochs `0, T, 2T, …` using that epoch's embeddings and
/// carries the previous subset forward in between.
pub fn simulate_schedule(sets_by_epoch: &[EmbeddingSet], cfg: &PruneConfig) -> Result<Vec<EpochSelection>> {
    cfg.validate()?;
    let mut out: Vec<EpochSelection> = Vec::with_capacity(sets_by_epoch.len());
    let expected = sets_by_epoch.first().map_or(0, EmbeddingSet::len);
    for (epoch, set) in sets_by_epoch.iter().enumerate() {
        if set.len() != expected {
            return Err(PruneError::SizeMismatch { epoch, expected, found: set.len() });
        }
        let reselected = epoch % cfg.reselect_period == 0;
        let (selected, coverage_radius) = if reselected {
            let r = kcenter_greedy(set, cfg)?;
            (r.selected, r.coverage_radius)
        } else {
            let prev = out.last().expect("epoch 0 always selects").selected.clone();
            let radius = coverage_radius(&prev, set, cfg.metric)?;
            (prev, radius)
        };
        out.push(EpochSelection { epoch, reselected, selected, coverage_radius });
    }
    Ok(out)
}

/// `rank,image_id,min_distance_at_selection`; the seed row leaves the
/// distance empty.
pub fn write_selection_csv<W: Write>(mut w: W, result: &PruneResult, ids: &[String]) -> Result<()> {
    writeln!(w, "rank,image_id,min_distance_at_selection")?;
    for (rank, (&i, d)) in result.selected.iter().zip(&result.min_distance_at_selection).enumerate() {
        let id = ids.get(i).ok_or(PruneError::IndexOutOfRange(i))?;
        match d {
            Some(d) => writeln!(w, "{rank},{id},{d}")?,
            None => writeln!(w, "{rank},{id},")?,
        }
    }
    Ok(())
}

/// `epoch,reselected,coverage_radius,subset_size`.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[EpochSelection]) -> Result<()> {
    writeln!(w, "epoch,reselected,coverage_radius,subset_size")?;
    for e in trace {
        writeln!(w, "{},{},{},{}", e.epoch, e.reselected, e.coverage_radius, e.selected.len())?;
    }
    Ok(())
}
