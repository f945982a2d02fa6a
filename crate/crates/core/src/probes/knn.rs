//! Exact brute-force k-nearest-neighbour search.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DistanceMetric, ProbeError, Result, Weighting};
use crate::embed_store::{l2_normalize, LabeledSet, Labels};

/// Queries processed together against each training row.
const QUERY_BLOCK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    /// Row in the training set.
    pub index: usize,
    /// Cosine similarity, or negated Euclidean distance; higher is closer.
    pub score: f64,
}

/// Training vectors prepared for one metric (unit-normalized for cosine).
#[derive(Debug, Clone)]
pub struct KnnIndex<'a> {
    train: &'a LabeledSet,
    metric: DistanceMetric,
    rows: Vec<f64>,
}

fn prepare(v: &[f32], metric: DistanceMetric) -> Result<Vec<f64>> {
    let v: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    match metric {
        DistanceMetric::Cosine => l2_normalize(&v).map_err(|_| ProbeError::ZeroVector),
        DistanceMetric::Euclidean => Ok(v),
    }
}

fn score(metric: DistanceMetric, q: &[f64], t: &[f64]) -> f64 {
    match metric {
        DistanceMetric::Cosine => {
            let mut s = 0f64;
            for (a, b) in q.iter().zip(t) {
                s += a * b;
            }
            s
        }
        DistanceMetric::Euclidean => {
            let mut s = 0f64;
            for (a, b) in q.iter().zip(t) {
                let d = a - b;
                s += d * d;
            }
            -s.sqrt()
        }
    }
}

impl<'a> KnnIndex<'a> {
    pub fn new(train: &'a LabeledSet, metric: DistanceMetric) -> Result<Self> {
        if train.is_empty() {
            return Err(ProbeError::EmptyTrainSet);
        }
        let mut rows = Vec::with_capacity(train.len() * train.dim());
        for i in 0..train.len() {
            rows.extend(prepare(train.vector(i), metric)?);
        }
        Ok(Self { train, metric, rows })
    }

    pub fn train(&self) -> &'a LabeledSet {
        self.train
    }

    fn row(&self, i: usize) -> &[f64] {
        let d = self.train.dim();
        &self.rows[i * d..(i + 1) * d]
    }

    /// Closer first; equal scores fall back to image id, which is
    /// independent of training-set order.
    fn rank(&self, a: &Neighbor, b: &Neighbor) -> Ordering {
        b.score.total_cmp(&a.score).then_with(|| self.train.ids()[a.index].cmp(&self.train.ids()[b.index]))
    }

    fn top_k(&self, mut all: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
        let k = k.min(all.len());
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, |a, b| self.rank(a, b));
            all.truncate(k);
        }
        all.sort_by(|a, b| self.rank(a, b));
        all
    }

    /// The `k` nearest training rows to one query.
    pub fn neighbors(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        Ok(self.neighbors_batch(query, k)?.pop().unwrap_or_default())
    }

    /// Neighbours for a flat buffer of queries, one list per query.
    pub fn neighbors_batch(&self, queries: &[f32], k: usize) -> Result<Vec<Vec<Neighbor>>> {
        if k == 0 {
            return Err(ProbeError::InvalidConfig("k must be at least 1".into()));
        }
        let d = self.train.dim();
        if !queries.len().is_multiple_of(d) {
            return Err(ProbeError::DimMismatch { expected: d, found: queries.len() % d });
        }
        let prepared: Vec<Vec<f64>> =
            queries.chunks_exact(d).map(|q| prepare(q, self.metric)).collect::<Result<_>>()?;
        let n = self.train.len();
        let blocks: Vec<Vec<Vec<Neighbor>>> = prepared
            .par_chunks(QUERY_BLOCK)
            .map(|block| {
                let mut scores: Vec<Vec<Neighbor>> = block.iter().map(|_| Vec::with_capacity(n)).collect();
                for i in 0..n {
                    let t = self.row(i);
                    for (q, out) in block.iter().zip(scores.iter_mut()) {
                        out.push(Neighbor { index: i, score: score(self.metric, q, t) });
                    }
                }
                scores.into_iter().map(|all| self.top_k(all, k)).collect()
            })
            .collect();
        Ok(blocks.into_iter().flatten().collect())
    }
}

/// Per-neighbour vote weights, in rank order.
pub fn vote_weights(neighbors: &[Neighbor], weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::Uniform => vec![1.0; neighbors.len()],
        Weighting::Softmax { temperature } => {
            let top = neighbors.iter().map(|n| n.score).fold(f64::NEG_INFINITY, f64::max);
            neighbors.iter().map(|n| ((n.score - top) / temperature).exp()).collect()
        }
    }
}

/// Class with the largest summed weight; ties go to the earlier declared class.
pub fn classify_from(neighbors: &[Neighbor], labels: &[usize], n_classes: usize, weighting: Weighting) -> (usize, Vec<f64>) {
    let mut votes = vec![0f64; n_classes];
    for (nb, w) in neighbors.iter().zip(vote_weights(neighbors, weighting)) {
        votes[labels[nb.index]] += w;
    }
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    (best, votes)
}

pub fn regress_from(neighbors: &[Neighbor], targets: &[f64], weighting: Weighting) -> f64 {
    let (mut num, mut den) = (0f64, 0f64);
    for (nb, w) in neighbors.iter().zip(vote_weights(neighbors, weighting)) {
        num += w * targets[nb.index];
        den += w;
    }
    num / den
}

fn check_query(train: &LabeledSet, query: &[f32]) -> Result<()> {
    if train.is_empty() {
        return Err(ProbeError::EmptyTrainSet);
    }
    if query.len() != train.dim() {
        return Err(ProbeError::DimMismatch { expected: train.dim(), found: query.len() });
    }
    Ok(())
}

/// kNN class vote for a single query. Returns the class index and the
/// summed vote weight of every class.
pub fn knn_classify(query: &[f32], train: &LabeledSet, k: usize, metric: DistanceMetric, weighting: Weighting) -> Result<(usize, Vec<f64>)> {
    check_query(train, query)?;
    let Labels::Class { classes, values } = train.labels() else {
        return Err(ProbeError::LabelKindMismatch { probe: "knn_classify", labels: train.labels().kind() });
    };
    let nb = KnnIndex::new(train, metric)?.neighbors(query, k)?;
    Ok(classify_from(&nb, values, classes.len(), weighting))
}

/// Weighted mean of the `k` nearest targets for a single query.
pub fn knn_regress(query: &[f32], train: &LabeledSet, k: usize, metric: DistanceMetric, weighting: Weighting) -> Result<f64> {
    check_query(train, query)?;
    let Labels::Scalar { values, .. } = train.labels() else {
        return Err(ProbeError::LabelKindMismatch { probe: "knn_regress", labels: train.labels().kind() });
    };
    let nb = KnnIndex::new(train, metric)?.neighbors(query, k)?;
    Ok(regress_from(&nb, values, weighting))
}
