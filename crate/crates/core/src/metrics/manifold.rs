//! k-NN manifold estimates: radii, improved precision and recall.

use rayon::prelude::*;

use super::FeatureSet;
use crate::error::{Error, Result};

/// Neighbourhood size used when none is given.
pub const DEFAULT_K: usize = 3;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance from each row to its k-th nearest other row.
pub fn knn_radii(f: &FeatureSet, k: usize) -> Result<Vec<f64>> {
    let n = f.rows();
    if k == 0 || k >= n {
        return Err(Error::param(format!("k must satisfy 1 <= k < {n}, got {k}")));
    }
    let d = f.cols();
    let rows = f.row_major();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &rows[i * d..(i + 1) * d];
            let mut dists: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| distance(xi, &rows[j * d..(j + 1) * d]))
                .collect();
            *dists.select_nth_unstable_by(k - 1, f64::total_cmp).1
        })
        .collect())
}

/// Fraction of `query` rows inside some ball around a `support` row.
fn coverage(support: &FeatureSet, query: &FeatureSet, k: usize) -> Result<f64> {
    if support.cols() != query.cols() {
        return Err(Error::shape(support.cols(), query.cols()));
    }
    if query.rows() == 0 {
        return Err(Error::param("query feature set is empty"));
    }
    let radii = knn_radii(support, k)?;
    let d = support.cols();
    let (s, q) = (support.row_major(), query.row_major());
    let hits = (0..query.rows())
        .into_par_iter()
        .filter(|&i| {
            let xi = &q[i * d..(i + 1) * d];
            radii
                .iter()
                .enumerate()
                .any(|(j, r)| distance(xi, &s[j * d..(j + 1) * d]) <= *r)
        })
        .count();
    Ok(hits as f64 / query.rows() as f64)
}

/// Share of generated rows that land on the real-data manifold.
pub fn improved_precision(real: &FeatureSet, generated: &FeatureSet, k: usize) -> Result<f64> {
    coverage(real, generated, k)
}

/// Share of real rows that land on the generated-data manifold.
pub fn improved_recall(real: &FeatureSet, generated: &FeatureSet, k: usize) -> Result<f64> {
    coverage(generated, real, k)
}
