//! Inception Score over a table of class probabilities.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row-sum tolerance for probability tables.
const ROW_SUM_TOL: f64 = 1e-9;

/// `N × C` matrix of `p(y | x_i)`, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable {
    p: DMatrix<f64>,
}

impl ProbTable {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() == 0 || p.ncols() == 0 {
            return Err(Error::param("probability table is empty"));
        }
        for (i, row) in p.row_iter().enumerate() {
            if row.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::Validation(format!("row {i} has a negative or non-finite entry")));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Validation(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { p })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn classes(&self) -> usize {
        self.p.ncols()
    }
}

/// `exp(mean_i KL(p(y|x_i) ‖ p(y)))` with `p(y)` the column mean.
///
/// The marginal is a running mean, so identical rows reproduce themselves
/// exactly. The result is clamped to `[1, C]` against rounding.
pub fn inception_score(table: &ProbTable) -> f64 {
    let p = table.matrix();
    let (n, c) = (p.nrows(), p.ncols());
    let mut marginal = vec![0.0; c];
    for (i, row) in p.row_iter().enumerate() {
        let w = 1.0 / (i + 1) as f64;
        for (m, v) in marginal.iter_mut().zip(row.iter()) {
            *m += (v - *m) * w;
        }
    }
    let mut total = 0.0;
    for row in p.row_iter() {
        total += row
            .iter()
            .zip(&marginal)
            .filter(|(v, _)| **v > 0.0)
            .map(|(v, m)| v * (v / m).ln())
            .sum::<f64>();
    }
    (total / n as f64).exp().clamp(1.0, c as f64)
}
