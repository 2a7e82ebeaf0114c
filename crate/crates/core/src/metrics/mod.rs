//! Sample-quality metrics over pluggable feature and probability inputs.
//!
//! - [`frechet`]: Gaussian statistics, FID and sFID
//! - [`inception`]: Inception Score over class-probability tables
//! - [`manifold`]: k-NN radii and improved precision/recall
//! - [`fisher`]: two-sided Fisher exact test for 2×2 tables
//! - [`features`]: deterministic stand-in feature extractors

pub mod features;
pub mod fisher;
pub mod frechet;
pub mod inception;
pub mod manifold;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use features::{extract_features, Extractor};
pub use fisher::{fisher_exact_two_sided, Contingency2x2};
pub use frechet::{fid, gaussian_stats, sfid, GaussianStats};
pub use inception::{inception_score, ProbTable};
pub use manifold::{improved_precision, improved_recall, knn_radii, DEFAULT_K};

/// Name of the feature space compared by FID.
pub const FINAL_SPACE: &str = "final";
/// Name of the feature space compared by sFID.
pub const SPATIAL_SPACE: &str = "spatial";

/// One feature row per image, tagged with the space it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    data: DMatrix<f64>,
    space: String,
}

impl FeatureSet {
    pub fn new(data: DMatrix<f64>, space: impl Into<String>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature matrix has non-finite entries".into()));
        }
        Ok(Self { data, space: space.into() })
    }

    pub fn from_rows(rows: &[Vec<f64>], space: impl Into<String>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::shape(cols, bad.len()));
        }
        Self::new(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]), space)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn space(&self) -> &str {
        &self.space
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn with_space(self, space: impl Into<String>) -> Self {
        Self { space: space.into(), ..self }
    }

    /// Row-major copy used by the distance kernels.
    pub(crate) fn row_major(&self) -> Vec<f64> {
        self.data.transpose().as_slice().to_vec()
    }
}

/// Standardizes both sets per column with the mean and standard deviation
/// of `reference`; constant columns are only centered.
pub fn zscore_pair(reference: &FeatureSet, other: &FeatureSet) -> Result<(FeatureSet, FeatureSet)> {
    if reference.cols() != other.cols() {
        return Err(Error::shape(reference.cols(), other.cols()));
    }
    let n = reference.rows();
    if n < 2 {
        return Err(Error::InsufficientData { need: 2, got: n });
    }
    let mut a = reference.data.clone();
    let mut b = other.data.clone();
    for j in 0..a.ncols() {
        let mean = a.column(j).mean();
        let var = a.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        a.column_mut(j).apply(|v| *v = (*v - mean) / sd);
        b.column_mut(j).apply(|v| *v = (*v - mean) / sd);
    }
    Ok((
        FeatureSet { data: a, space: reference.space.clone() },
        FeatureSet { data: b, space: other.space.clone() },
    ))
}

const F32_MAGIC: &[u8; 4] = b"F32\n";

/// Writes `F32\n`, u32 LE rows, u32 LE cols, then f32 LE values row-major.
pub fn write_f32_matrix<W: Write>(m: &DMatrix<f64>, mut w: W) -> Result<()> {
    let rows = u32::try_from(m.nrows()).map_err(|_| Error::param("too many rows for F32 file"))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| Error::param("too many columns for F32 file"))?;
    w.write_all(F32_MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 4);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&(m[(i, j)] as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_f32_matrix<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("F32 file shorter than its header".into()))?;
    if &header[..4] != F32_MAGIC {
        return Err(Error::Format("missing F32 magic".into()));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let len = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("F32 dimensions overflow".into()))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != len {
        return Err(Error::Format(format!(
            "F32 body has {} bytes, header implies {len}",
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn save_f32_matrix(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    write_f32_matrix(m, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_f32_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_f32_matrix(std::io::BufReader::new(std::fs::File::open(path)?))
}
