use super::{ColocCriteria, RefMeasurement};
use crate::embed_store::ImageMeta;

/// Reference records sorted by time.
///
/// A query binary-searches the time window and then filters the window
/// linearly by spatial gate, kind and flags. Results are record indices
/// into the original slice, ascending.
#[derive(Debug, Clone)]
pub struct SpatiotemporalIndex<'a> {
    refs: &'a [RefMeasurement],
    by_time: Vec<usize>,
    times: Vec<i64>,
}

impl<'a> SpatiotemporalIndex<'a> {
    pub fn build(refs: &'a [RefMeasurement]) -> Self {
        let mut by_time: Vec<usize> = (0..refs.len()).collect();
        by_time.sort_by_key(|&i| (refs[i].time, i));
        let times = by_time.iter().map(|&i| refs[i].time.seconds()).collect();
        Self { refs, by_time, times }
    }

    pub fn refs(&self) -> &'a [RefMeasurement] {
        self.refs
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    /// Indices of records with `|time - t| <= max_dt_s`, ascending.
    pub fn time_window(&self, t: i64, max_dt_s: i64) -> Vec<usize> {
        let lo = self.times.partition_point(|&x| x < t.saturating_sub(max_dt_s));
        let hi = self.times.partition_point(|&x| x <= t.saturating_add(max_dt_s));
        let mut out = self.by_time[lo..hi].to_vec();
        out.sort_unstable();
        out
    }

    /// Records admitted by every rule of `c` for image `img`, ascending.
    pub fn candidates(&self, img: &ImageMeta, c: &ColocCriteria) -> Vec<usize> {
        let mut out = self.time_window(img.meta.timestamp.seconds(), c.max_dt_s);
        out.retain(|&i| c.admits(&img.meta, &self.refs[i]));
        out
    }
}
