//! Fréchet distance between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::FeatureSet;
use crate::error::{Error, Result};

/// Symmetry tolerance for covariances.
const SYMMETRY_TOL: f64 = 1e-9;
/// Most negative eigenvalue tolerated, relative to the largest magnitude.
const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let s = Self { mu, sigma };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.mu.len();
        if self.sigma.nrows() != f || self.sigma.ncols() != f {
            return Err(Error::shape(f * f, self.sigma.len()));
        }
        let scale = self.sigma.amax().max(1.0);
        for i in 0..f {
            for j in 0..i {
                if (self.sigma[(i, j)] - self.sigma[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Validation(format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

/// Sample mean and unbiased (1/(N−1)) covariance of the rows.
pub fn gaussian_stats(f: &FeatureSet) -> Result<GaussianStats> {
    let (n, d) = (f.rows(), f.cols());
    if n < 2 {
        return Err(Error::InsufficientData { need: 2, got: n });
    }
    let x = f.data();
    let mu = DVector::from_fn(d, |j, _| x.column(j).mean());
    let mut centered = x.clone();
    for j in 0..d {
        let m = mu[j];
        centered.column_mut(j).apply(|v| *v -= m);
    }
    let mut sigma = centered.transpose() * &centered / (n - 1) as f64;
    sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(GaussianStats { mu, sigma })
}

/// Eigenvalues of a symmetric PSD matrix with round-off negatives set to 0.
fn psd_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let mut eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let tol = PSD_TOL * eig.eigenvalues.amax().max(1.0);
    for v in eig.eigenvalues.iter_mut() {
        if *v < -tol {
            return Err(Error::Numeric(format!("{what} is not positive semi-definite (eigenvalue {v})")));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(eig)
}

/// `Tr((Σ_r Σ_g)^{1/2})` through the symmetric form `Σ_r^{1/2} Σ_g Σ_r^{1/2}`.
pub fn trace_sqrt_product(sigma_r: &DMatrix<f64>, sigma_g: &DMatrix<f64>) -> Result<f64> {
    let er = psd_eigen(sigma_r, "first covariance")?;
    let root = &er.eigenvectors
        * DMatrix::from_diagonal(&er.eigenvalues.map(f64::sqrt))
        * er.eigenvectors.transpose();
    let inner = &root * sigma_g * &root;
    let ei = psd_eigen(&inner, "covariance product")?;
    Ok(ei.eigenvalues.iter().map(|v| v.sqrt()).sum())
}

/// `‖μ_r − μ_g‖² + Tr(Σ_r + Σ_g − 2(Σ_r Σ_g)^{1/2})`, clamped at zero.
pub fn fid(r: &GaussianStats, g: &GaussianStats) -> Result<f64> {
    r.validate()?;
    g.validate()?;
    if r.dim() != g.dim() {
        return Err(Error::shape(r.dim(), g.dim()));
    }
    if r == g {
        return Ok(0.0);
    }
    let mean_term = (&r.mu - &g.mu).norm_squared();
    let cross = trace_sqrt_product(&r.sigma, &g.sigma)?;
    Ok((mean_term + r.sigma.trace() + g.sigma.trace() - 2.0 * cross).max(0.0))
}

/// FID over a spatial feature space; both sets must carry the same tag.
pub fn sfid(r_spatial: &FeatureSet, g_spatial: &FeatureSet) -> Result<f64> {
    if r_spatial.space() != g_spatial.space() {
        return Err(Error::param(format!(
            "feature spaces differ: {:?} vs {:?}",
            r_spatial.space(),
            g_spatial.space()
        )));
    }
    fid(&gaussian_stats(r_spatial)?, &gaussian_stats(g_spatial)?)
}
