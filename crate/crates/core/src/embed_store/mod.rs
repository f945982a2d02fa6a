//! Embedding sets, label tables and the helpers that turn them into
//! probe-ready labeled datasets.
//!
//! An [`EmbeddingSet`] holds one image-level vector per image and optionally
//! a patch grid per image. Vectors are stored as `f32` (the on-disk width)
//! in one flat row-major buffer; every numeric consumer accumulates in `f64`.

mod format;
mod labels;
mod meta;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{parse_embedding_file, write_embedding_file, FORMAT_VERSION, HEADER_LEN, MAGIC};
pub use labels::{ClassSet, LabelKind, LabelTable, Labels, Unit, TENGEOP_CLASSES};
pub use meta::{parse_meta_sidecar, write_meta_sidecar, GeoMeta, ImageMeta, Timestamp, DEFAULT_FOOTPRINT_HALF_WIDTH_KM};

pub type Result<T> = std::result::Result<T, EmbedError>;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("bad magic: expected \"OSWB-EMB1\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated file at byte offset {offset}: needed {needed} more bytes")]
    TruncatedFile { offset: usize, needed: usize },
    #[error("dimension mismatch at byte offset {offset}: header declares dim {expected}, rows carry {found}")]
    DimMismatch { offset: usize, expected: usize, found: usize },
    #[error("non-finite value at byte offset {offset}")]
    NonFiniteValue { offset: usize },
    #[error("non-finite component {component} in record {record}")]
    NonFiniteComponent { record: usize, component: usize },
    #[error("duplicate image id {0:?}")]
    DuplicateImageId(String),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("image id at byte offset {offset} is not valid UTF-8")]
    InvalidId { offset: usize },
    #[error("{count} trailing bytes after payload at byte offset {offset}")]
    TrailingData { offset: usize, count: usize },
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("vector norm below 1e-12")]
    ZeroVector,
    #[error("patch grid is empty")]
    EmptyGrid,
    #[error("join of embeddings and labels is empty")]
    EmptyJoin,
    #[error("no metadata for image {0:?}")]
    MissingMeta(String),
    #[error("metadata line {line}: {msg}")]
    MetaParse { line: usize, msg: String },
    #[error("label table line {line}: {msg}")]
    LabelParse { line: usize, msg: String },
    #[error("label table line {line}: unknown class {name:?}")]
    UnknownClass { line: usize, name: String },
    #[error("label table line {line}: label kind differs from earlier rows")]
    MixedLabelKinds { line: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Read-only view of one `rows × cols × dim` patch grid, row-major.
#[derive(Debug, Clone, Copy)]
pub struct GridView<'a> {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub data: &'a [f32],
}

impl<'a> GridView<'a> {
    pub fn new(rows: usize, cols: usize, dim: usize, data: &'a [f32]) -> Result<Self> {
        if data.len() != rows * cols * dim {
            return Err(EmbedError::LengthMismatch { expected: rows * cols * dim, found: data.len() });
        }
        Ok(Self { rows, cols, dim, data })
    }

    pub fn patch(&self, row: usize, col: usize) -> &'a [f32] {
        let start = (row * self.cols + col) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn patches(&self) -> impl Iterator<Item = &'a [f32]> + 'a {
        self.data.chunks_exact(self.dim.max(1))
    }
}

/// Owned patch grid, mostly used to build inputs in code.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl PatchGrid {
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        GridView::new(rows, cols, dim, &data)?;
        Ok(Self { rows, cols, dim, data })
    }

    pub fn view(&self) -> GridView<'_> {
        GridView { rows: self.rows, cols: self.cols, dim: self.dim, data: &self.data }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PatchBlock {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

/// Ordered collection of image embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    dim: usize,
    vectors: Vec<f32>,
    patches: Option<PatchBlock>,
    meta: Option<Vec<GeoMeta>>,
}

impl EmbeddingSet {
    /// Builds a set from ids and a flat `ids.len() × dim` buffer.
    pub fn new(ids: Vec<String>, dim: usize, vectors: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(EmbedError::InvalidHeader("dim must be positive".into()));
        }
        if vectors.len() != ids.len() * dim {
            return Err(EmbedError::LengthMismatch { expected: ids.len() * dim, found: vectors.len() });
        }
        check_unique(&ids)?;
        check_finite(&vectors, dim)?;
        Ok(Self { ids, dim, vectors, patches: None, meta: None })
    }

    /// Builds a set from per-image vectors.
    pub fn from_rows(ids: Vec<String>, dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(EmbedError::LengthMismatch { expected: dim, found: row.len() });
            }
            flat.extend_from_slice(row);
        }
        Self::new(ids, dim, flat)
    }

    /// Attaches one `rows × cols × dim` grid per image (flat, image-major).
    pub fn with_patches(mut self, rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(EmbedError::EmptyGrid);
        }
        if rows > u16::MAX as usize || cols > u16::MAX as usize {
            return Err(EmbedError::InvalidHeader("patch grid shape exceeds u16".into()));
        }
        let expected = self.ids.len() * rows * cols * self.dim;
        if data.len() != expected {
            return Err(EmbedError::LengthMismatch { expected, found: data.len() });
        }
        check_finite(&data, self.dim)?;
        self.patches = Some(PatchBlock { rows, cols, data });
        Ok(self)
    }

    /// Attaches acquisition metadata; every image must have a record.
    pub fn with_meta(mut self, records: &[ImageMeta]) -> Result<Self> {
        let by_id: HashMap<&str, &GeoMeta> = records.iter().map(|r| (r.image_id.as_str(), &r.meta)).collect();
        let meta = self
            .ids
            .iter()
            .map(|id| by_id.get(id.as_str()).map(|m| (*m).clone()).ok_or_else(|| EmbedError::MissingMeta(id.clone())))
            .collect::<Result<Vec<_>>>()?;
        self.meta = Some(meta);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn patch_shape(&self) -> Option<(usize, usize)> {
        self.patches.as_ref().map(|p| (p.rows, p.cols))
    }

    pub fn patch_data(&self) -> Option<&[f32]> {
        self.patches.as_ref().map(|p| p.data.as_slice())
    }

    pub fn patch_grid(&self, i: usize) -> Option<GridView<'_>> {
        self.patches.as_ref().map(|p| {
            let per = p.rows * p.cols * self.dim;
            GridView { rows: p.rows, cols: p.cols, dim: self.dim, data: &p.data[i * per..(i + 1) * per] }
        })
    }

    pub fn meta(&self) -> Option<&[GeoMeta]> {
        self.meta.as_deref()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Replaces image vectors by pooled patch grids.
    pub fn pooled(&self, mode: PoolMode) -> Result<Self> {
        if self.patches.is_none() {
            return Err(EmbedError::EmptyGrid);
        }
        let mut vectors = Vec::with_capacity(self.vectors.len());
        for i in 0..self.len() {
            vectors.extend(pool_patch_grid(self.patch_grid(i).expect("patches present"), mode)?);
        }
        Ok(Self { vectors, ..self.clone() })
    }
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(EmbedError::DuplicateImageId(id.clone()));
        }
    }
    Ok(())
}

fn check_finite(values: &[f32], dim: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(EmbedError::NonFiniteComponent { record: pos / dim, component: pos % dim }),
        None => Ok(()),
    }
}

/// Scales `v` to unit Euclidean norm.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm.is_nan() || norm < 1e-12 {
        return Err(EmbedError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    Max,
    Mean,
}

/// Global pooling of a patch grid to one `dim`-length vector.
///
/// Max pooling is the default for backbones that only expose feature maps.
/// Mean accumulates in `f64` in row-major patch order.
pub fn pool_patch_grid(grid: GridView<'_>, mode: PoolMode) -> Result<Vec<f32>> {
    let n = grid.rows * grid.cols;
    if n == 0 || grid.dim == 0 {
        return Err(EmbedError::EmptyGrid);
    }
    match mode {
        PoolMode::Max => {
            let mut out = grid.patch(0, 0).to_vec();
            for patch in grid.patches().skip(1) {
                for (o, &x) in out.iter_mut().zip(patch) {
                    if x > *o {
                        *o = x;
                    }
                }
            }
            Ok(out)
        }
        PoolMode::Mean => {
            let mut acc = vec![0f64; grid.dim];
            for patch in grid.patches() {
                for (a, &x) in acc.iter_mut().zip(patch) {
                    *a += x as f64;
                }
            }
            Ok(acc.into_iter().map(|a| (a / n as f64) as f32).collect())
        }
    }
}

/// Embeddings joined with one label per image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    ids: Vec<String>,
    dim: usize,
    vectors: Vec<f32>,
    labels: Labels,
}

impl LabeledSet {
    pub fn new(ids: Vec<String>, dim: usize, vectors: Vec<f32>, labels: Labels) -> Result<Self> {
        let set = EmbeddingSet::new(ids, dim, vectors)?;
        if labels.len() != set.len() {
            return Err(EmbedError::LengthMismatch { expected: set.len(), found: labels.len() });
        }
        Ok(Self { ids: set.ids, dim, vectors: set.vectors, labels })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut vectors = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            vectors.extend_from_slice(self.vector(i));
        }
        Self {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            dim: self.dim,
            vectors,
            labels: self.labels.subset(indices),
        }
    }

    /// Splits into `(train, test)` by id membership in `test_ids`.
    pub fn split_by_ids(&self, test_ids: &HashSet<String>) -> (Self, Self) {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..self.len()).partition(|&i| test_ids.contains(&self.ids[i]));
        (self.subset(&train), self.subset(&test))
    }

    /// The same data under new ids.
    pub fn with_ids(&self, ids: Vec<String>) -> Result<Self> {
        Self::new(ids, self.dim, self.vectors.clone(), self.labels.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReport {
    pub matched: usize,
    pub unmatched_embeddings: usize,
    pub unmatched_labels: usize,
}

/// Inner join on image id, in embedding-set order.
pub fn join_labels(set: &EmbeddingSet, labels: &LabelTable) -> Result<(LabeledSet, JoinReport)> {
    let mut rows = Vec::new();
    let mut label_rows = Vec::new();
    for (i, id) in set.ids().iter().enumerate() {
        if let Some(j) = labels.position(id) {
            rows.push(i);
            label_rows.push(j);
        }
    }
    if rows.is_empty() {
        return Err(EmbedError::EmptyJoin);
    }
    let mut vectors = Vec::with_capacity(rows.len() * set.dim());
    for &i in &rows {
        vectors.extend_from_slice(set.vector(i));
    }
    let report = JoinReport {
        matched: rows.len(),
        unmatched_embeddings: set.len() - rows.len(),
        unmatched_labels: labels.len() - rows.len(),
    };
    let ids = rows.iter().map(|&i| set.ids()[i].clone()).collect();
    let joined = LabeledSet { ids, dim: set.dim(), vectors, labels: labels.labels().subset(&label_rows) };
    Ok((joined, report))
}
