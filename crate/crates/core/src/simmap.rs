//! Patch-level cosine-similarity maps relative to a reference patch, with
//! 8-bit PGM and CSV export.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed_store::GridView;

#[derive(Debug, Error, PartialEq)]
pub enum SimmapError {
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("vectors have lengths {0} and {1}")]
    DimMismatch(usize, usize),
    #[error("reference ({row}, {col}) outside a {rows}x{cols} grid")]
    RefOutOfBounds { row: usize, col: usize, rows: usize, cols: usize },
    #[error("all map values are equal; min-max normalization is undefined")]
    DegenerateRange,
    #[error("malformed map file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SimmapError>;

fn norm_sq(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// `a·b / (‖a‖‖b‖)` in f64, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SimmapError::DimMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm_sq(a), norm_sq(b));
    if na == 0.0 || nb == 0.0 {
        return Err(SimmapError::ZeroVector);
    }
    Ok(cos_from(dot(a, b), na, nb))
}

/// `sqrt(x·x) == x` in binary floating point, so identical vectors give 1 exactly.
fn cos_from(dot: f64, na_sq: f64, nb_sq: f64) -> f64 {
    (dot / (na_sq * nb_sq).sqrt()).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub values: Vec<f64>,
    pub reference: (usize, usize),
}

impl SimilarityMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// Cosine similarity of every patch to `grid[reference]`. Zero patches
/// other than the reference map to 0.
pub fn similarity_map(grid: GridView<'_>, reference: (usize, usize)) -> Result<SimilarityMap> {
    let (row, col) = reference;
    if row >= grid.rows || col >= grid.cols {
        return Err(SimmapError::RefOutOfBounds { row, col, rows: grid.rows, cols: grid.cols });
    }
    let r = grid.patch(row, col);
    let nr = norm_sq(r);
    if nr == 0.0 {
        return Err(SimmapError::ZeroVector);
    }
    let mut values = Vec::with_capacity(grid.rows * grid.cols);
    for i in 0..grid.rows {
        for j in 0..grid.cols {
            let v = if (i, j) == reference {
                1.0
            } else {
                let p = grid.patch(i, j);
                let np = norm_sq(p);
                if np == 0.0 {
                    0.0
                } else {
                    cos_from(dot(r, p), nr, np)
                }
            };
            values.push(v);
        }
    }
    Ok(SimilarityMap { rows: grid.rows, cols: grid.cols, values, reference })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Fixed range `[-1, 1]`.
    None,
    /// Observed min and max of the map.
    Minmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedMap {
    pub pgm: Vec<u8>,
    pub csv: String,
}

fn quantize(v: f64, lo: f64, hi: f64) -> u8 {
    (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
}

/// Binary P5 graymap plus a full-precision CSV grid. Both carry the
/// reference position as a `# ref=r,c` comment.
pub fn export_map(map: &SimilarityMap, normalization: Normalization) -> Result<ExportedMap> {
    let (lo, hi) = match normalization {
        Normalization::None => (-1.0, 1.0),
        Normalization::Minmax => {
            let lo = map.values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = map.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi.is_nan() || hi <= lo {
                return Err(SimmapError::DegenerateRange);
            }
            (lo, hi)
        }
    };
    let (r, c) = map.reference;
    let mut pgm = format!("P5\n# ref={r},{c}\n{} {}\n255\n", map.cols, map.rows).into_bytes();
    pgm.extend(map.values.iter().map(|&v| quantize(v, lo, hi)));
    let mut csv = format!("# ref={r},{c}\nrow,col,value\n");
    for i in 0..map.rows {
        for j in 0..map.cols {
            csv.push_str(&format!("{i},{j},{}\n", map.get(i, j)));
        }
    }
    Ok(ExportedMap { pgm, csv })
}

fn parse_ref(line: &str) -> Result<(usize, usize)> {
    let rest = line.strip_prefix("# ref=").ok_or_else(|| SimmapError::Parse(format!("expected reference comment, got {line:?}")))?;
    let (r, c) = rest.split_once(',').ok_or_else(|| SimmapError::Parse(rest.to_string()))?;
    let num = |s: &str| s.trim().parse::<usize>().map_err(|e| SimmapError::Parse(e.to_string()));
    Ok((num(r)?, num(c)?))
}

/// Reads back a CSV produced by [`export_map`].
pub fn parse_map_csv(text: &str) -> Result<SimilarityMap> {
    let mut lines = text.lines();
    let reference = parse_ref(lines.next().unwrap_or_default())?;
    if lines.next() != Some("row,col,value") {
        return Err(SimmapError::Parse("missing header row".into()));
    }
    let mut cells = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        let [i, j, v] = parts[..] else {
            return Err(SimmapError::Parse(format!("bad row {line:?}")));
        };
        let i: usize = i.parse().map_err(|_| SimmapError::Parse(line.to_string()))?;
        let j: usize = j.parse().map_err(|_| SimmapError::Parse(line.to_string()))?;
        let v: f64 = v.parse().map_err(|_| SimmapError::Parse(line.to_string()))?;
        cells.push((i, j, v));
    }
    let rows = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let cols = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    if cells.len() != rows * cols {
        return Err(SimmapError::Parse("grid is not complete".into()));
    }
    let mut values = vec![f64::NAN; rows * cols];
    for (i, j, v) in cells {
        values[i * cols + j] = v;
    }
    Ok(SimilarityMap { rows, cols, values, reference })
}

/// `(rows, cols, reference, pixels)` of a parsed PGM.
pub type PgmImage = (usize, usize, (usize, usize), Vec<u8>);

/// Reads back a PGM produced by [`export_map`].
pub fn parse_pgm(bytes: &[u8]) -> Result<PgmImage> {
    let mut pos = 0;
    let mut line = || -> Result<&str> {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or_else(|| SimmapError::Parse("truncated header".into()))?;
        let s = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|e| SimmapError::Parse(e.to_string()))?;
        pos += end + 1;
        Ok(s)
    };
    if line()? != "P5" {
        return Err(SimmapError::Parse("not a binary graymap".into()));
    }
    let reference = parse_ref(line()?)?;
    let dims = line()?;
    let (c, r) = dims.split_once(' ').ok_or_else(|| SimmapError::Parse(dims.to_string()))?;
    let cols: usize = c.parse().map_err(|_| SimmapError::Parse(dims.to_string()))?;
    let rows: usize = r.parse().map_err(|_| SimmapError::Parse(dims.to_string()))?;
    if line()? != "255" {
        return Err(SimmapError::Parse("expected maxval 255".into()));
    }
    let pixels = bytes[pos..].to_vec();
    if pixels.len() != rows * cols {
        return Err(SimmapError::Parse(format!("expected {} pixels, found {}", rows * cols, pixels.len())));
    }
    Ok((rows, cols, reference, pixels))
}
