//! Structure-preserving stain normalization for H&E images.
//!
//! Pixels are mapped to optical density (Beer–Lambert), where the two stains
//! mix linearly: `OD ≈ W·H` with `W` a 3×2 non-negative basis of unit
//! columns and `H` non-negative per-pixel concentrations. The basis is found
//! by sparse non-negative factorization; transfer keeps the source
//! concentrations and swaps in the target basis.

use nalgebra::{DMatrix, Matrix2, Matrix3, Matrix3x2, SymmetricEigen, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Pixels whose OD summed over channels is below this are background.
pub const BACKGROUND_OD: f64 = 0.15;
pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_ITERS: usize = 200;
pub const DEFAULT_I0: f64 = 255.0;

const WARM_START_ITERS: usize = 20;
const TINY: f64 = 1e-12;
/// Relative objective increase tolerated when collapsing to one stain.
const SINGLE_STAIN_SLACK: f64 = 0.01;

/// `OD = -ln((v + 1) / (I0 + 1))` per channel; returns a `3 × N` matrix with
/// pixels in row-major image order.
pub fn rgb_to_od(img: &RgbImage, i0: f64) -> Result<DMatrix<f64>> {
    if !(i0 > 0.0) {
        return Err(Error::param(format!("I0 must be positive, got {i0}")));
    }
    let n = img.pixel_count();
    let mut od = DMatrix::zeros(3, n);
    let denom = i0 + 1.0;
    for (j, px) in img.as_bytes().chunks_exact(3).enumerate() {
        for c in 0..3 {
            // Values above I0 would give negative density.
            od[(c, j)] = (-((px[c] as f64 + 1.0) / denom).ln()).max(0.0);
        }
    }
    Ok(od)
}

/// Inverse of [`rgb_to_od`], rounding to the nearest level and clamping to `0..=255`.
pub fn od_to_rgb(od: &DMatrix<f64>, width: usize, height: usize, i0: f64) -> Result<RgbImage> {
    if od.nrows() != 3 {
        return Err(Error::shape(3, od.nrows()));
    }
    if od.ncols() != width * height {
        return Err(Error::shape(width * height, od.ncols()));
    }
    let data = od
        .iter()
        .map(|&d| ((i0 + 1.0) * (-d).exp() - 1.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    RgbImage::new(width, height, data)
}

/// `true` for pixels carrying stain (OD L1 norm at or above [`BACKGROUND_OD`]).
pub fn tissue_mask(od: &DMatrix<f64>) -> Vec<bool> {
    od.column_iter().map(|c| c.sum() >= BACKGROUND_OD).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Weight of the L1 penalty on concentrations.
    pub lambda: f64,
    /// Alternating iterations after the warm start.
    pub iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA, iters: DEFAULT_ITERS }
    }
}

/// Result of [`fit_stains`].
#[derive(Debug, Clone, PartialEq)]
pub struct StainFit {
    /// Unit-norm non-negative stain vectors, hematoxylin-like first.
    pub w: Matrix3x2<f64>,
    /// `2 × N` concentrations for every pixel of the input.
    pub h: DMatrix<f64>,
    /// Objective after the warm start and after each alternating iteration.
    pub objective_trace: Vec<f64>,
}

/// Minimizes `‖y − W h‖² + λ·Σh` over `h ≥ 0` exactly by checking every
/// active set of the two variables.
fn lasso_2(gram: &Matrix2<f64>, wty: &Vector2<f64>, lambda: f64) -> Vector2<f64> {
    let r = wty - Vector2::repeat(lambda / 2.0);
    let value = |h: &Vector2<f64>| (h.transpose() * gram * h)[0] - 2.0 * r.dot(h);
    let mut best = Vector2::zeros();
    let mut best_val = 0.0;
    let mut consider = |h: Vector2<f64>| {
        let v = value(&h);
        if v < best_val {
            best_val = v;
            best = h;
        }
    };
    if gram[(0, 0)] > TINY && r[0] > 0.0 {
        consider(Vector2::new(r[0] / gram[(0, 0)], 0.0));
    }
    if gram[(1, 1)] > TINY && r[1] > 0.0 {
        consider(Vector2::new(0.0, r[1] / gram[(1, 1)]));
    }
    let det = gram.determinant();
    if det > TINY * gram[(0, 0)] * gram[(1, 1)] {
        let h = Vector2::new(
            (gram[(1, 1)] * r[0] - gram[(0, 1)] * r[1]) / det,
            (gram[(0, 0)] * r[1] - gram[(1, 0)] * r[0]) / det,
        );
        if h[0] > 0.0 && h[1] > 0.0 {
            consider(h);
        }
    }
    best
}

/// Non-negative (optionally L1-penalized) concentrations of every column of
/// `od` against the basis `w`.
pub fn concentrations(od: &DMatrix<f64>, w: &Matrix3x2<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if od.nrows() != 3 {
        return Err(Error::shape(3, od.nrows()));
    }
    let gram = w.transpose() * w;
    let mut h = DMatrix::zeros(2, od.ncols());
    for (j, col) in od.column_iter().enumerate() {
        let y = Vector3::new(col[0], col[1], col[2]);
        let c = lasso_2(&gram, &(w.transpose() * y), lambda);
        h[(0, j)] = c[0];
        h[(1, j)] = c[1];
    }
    Ok(h)
}

fn objective(od: &DMatrix<f64>, w: &Matrix3x2<f64>, h: &DMatrix<f64>, lambda: f64) -> f64 {
    let wd = DMatrix::from_column_slice(3, 2, w.as_slice());
    let resid = od - wd * h;
    resid.norm_squared() + lambda * h.iter().sum::<f64>()
}

/// Projection onto `{w ≥ 0, ‖w‖ ≤ 1}`.
fn project_column(u: Vector3<f64>) -> Vector3<f64> {
    let clamped = u.map(|v| v.max(0.0));
    let n = clamped.norm();
    if n > 1.0 {
        clamped / n
    } else {
        clamped
    }
}

/// Exact block-coordinate minimization of the fidelity term over each column
/// of `w` in turn (the per-column quadratic is isotropic, so projecting the
/// unconstrained minimizer is exact).
fn update_basis(od: &DMatrix<f64>, w: &mut Matrix3x2<f64>, h: &DMatrix<f64>) {
    let a = h * h.transpose();
    let b = od * h.transpose();
    for j in 0..2 {
        let ajj = a[(j, j)];
        if ajj <= TINY {
            continue;
        }
        let wa = *w * Vector2::new(a[(0, j)], a[(1, j)]);
        let bj = Vector3::new(b[(0, j)], b[(1, j)], b[(2, j)]);
        let u = w.column(j).into_owned() + (bj - wa) / ajj;
        w.set_column(j, &project_column(u));
    }
}

fn normalize_columns(w: &mut Matrix3x2<f64>, h: &mut DMatrix<f64>) {
    for j in 0..2 {
        let n = w.column(j).norm();
        if n > TINY {
            w.set_column(j, &(w.column(j) / n));
            h.row_mut(j).scale_mut(n);
        }
    }
}

/// Fills unusable basis columns with a unit vector that keeps `w` full rank.
fn repair_basis(w: &mut Matrix3x2<f64>) {
    for j in 0..2 {
        if w.column(j).norm() <= 1e-6 {
            let other = w.column(1 - j).into_owned();
            // Non-negative direction as far as possible from the other column.
            let k = other.imin();
            let mut e = Vector3::zeros();
            e[k] = 1.0;
            w.set_column(j, &e);
        }
    }
}

/// One-stain basis if a single OD direction explains the tissue pixels about
/// as well as the two-stain fit. The spare column is the coordinate axis least
/// aligned with that direction, so the lasso leaves its concentrations at zero.
fn single_stain_basis(od: &DMatrix<f64>, lambda: f64, two_stain_objective: f64) -> Option<Matrix3x2<f64>> {
    let scatter = od * od.transpose();
    let eig = SymmetricEigen::new(Matrix3::from_iterator(scatter.iter().copied()));
    let top = eig.eigenvalues.imax();
    let dir: Vector3<f64> = eig.eigenvectors.column(top).map(f64::abs);
    let dir = dir / dir.norm();
    let mut objective = 0.0;
    for x in od.column_iter() {
        let proj = dir.dot(&x);
        let h = (proj - lambda / 2.0).max(0.0);
        objective += (x - dir * h).norm_squared() + lambda * h;
    }
    if objective > two_stain_objective * (1.0 + SINGLE_STAIN_SLACK) {
        return None;
    }
    let mut spare = Vector3::zeros();
    spare[dir.imin()] = 1.0;
    Some(Matrix3x2::from_columns(&[dir, spare]))
}

/// Sparse non-negative factorization `OD ≈ W·H` over the tissue pixels.
///
/// A seeded multiplicative-update warm start is followed by `iters` rounds of
/// alternating exact updates: per-pixel non-negative lasso for `H` and
/// projected block-coordinate steps for the columns of `W` under
/// `W ≥ 0, ‖w_j‖ ≤ 1`. Both steps never increase the objective. The
/// returned `W` has unit columns ordered by blue-channel density (largest
/// first) and `H` is recomputed for every pixel against it. Rank-one tissue
/// collapses to a single stain plus an unused spare column.
pub fn fit_stains<R: Rng + ?Sized>(od: &DMatrix<f64>, opts: FitOptions, rng: &mut R) -> Result<StainFit> {
    if od.nrows() != 3 {
        return Err(Error::shape(3, od.nrows()));
    }
    if !(opts.lambda >= 0.0 && opts.lambda.is_finite()) {
        return Err(Error::param(format!("lambda must be >= 0, got {}", opts.lambda)));
    }
    let mask = tissue_mask(od);
    let idx: Vec<usize> = (0..od.ncols()).filter(|&j| mask[j]).collect();
    if idx.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 tissue pixels, found {}",
            idx.len()
        )));
    }
    let tissue = od.select_columns(&idx);
    let n = tissue.ncols();

    let mut w = Matrix3x2::from_fn(|_, _| rng.gen_range(0.1..1.0));
    let mut h = DMatrix::from_fn(2, n, |_, _| rng.gen_range(0.1..1.0));
    for _ in 0..WARM_START_ITERS {
        let wd = DMatrix::from_column_slice(3, 2, w.as_slice());
        let num = wd.transpose() * &tissue;
        let den = wd.transpose() * &wd * &h;
        h.zip_zip_apply(&num, &den, |hv, nv, dv| *hv *= nv / (dv + opts.lambda / 2.0 + TINY));
        let num = &tissue * h.transpose();
        let den = &wd * (&h * h.transpose());
        let mut wd = wd;
        wd.zip_zip_apply(&num, &den, |wv, nv, dv| *wv *= nv / (dv + TINY));
        w = Matrix3x2::from_column_slice(wd.as_slice());
        normalize_columns(&mut w, &mut h);
    }
    repair_basis(&mut w);

    let mut trace = Vec::with_capacity(opts.iters + 1);
    h = concentrations(&tissue, &w, opts.lambda)?;
    trace.push(objective(&tissue, &w, &h, opts.lambda));
    for _ in 0..opts.iters {
        update_basis(&tissue, &mut w, &h);
        h = concentrations(&tissue, &w, opts.lambda)?;
        trace.push(objective(&tissue, &w, &h, opts.lambda));
    }

    normalize_columns(&mut w, &mut h);
    repair_basis(&mut w);
    if let Some(single) = single_stain_basis(&tissue, opts.lambda, *trace.last().unwrap()) {
        w = single;
    }
    if w[(2, 1)] > w[(2, 0)] {
        w.swap_columns(0, 1);
    }
    let h_all = concentrations(od, &w, opts.lambda)?;
    Ok(StainFit { w, h: h_all, objective_trace: trace })
}

/// Stain basis plus per-stain 99th-percentile concentration.
#[derive(Debug, Clone, PartialEq)]
pub struct StainModel {
    pub w: Matrix3x2<f64>,
    pub c99: [f64; 2],
}

/// On-disk form: 6 basis entries row-major, then the two percentiles.
#[derive(Serialize, Deserialize)]
struct StainModelJson {
    w: [f64; 6],
    c99: [f64; 2],
}

impl StainModel {
    pub fn new(w: Matrix3x2<f64>, c99: [f64; 2]) -> Result<Self> {
        let m = Self { w, c99 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Validation("stain basis has negative entries".into()));
        }
        for j in 0..2 {
            let n = self.w.column(j).norm();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!("stain column {j} has norm {n}")));
            }
        }
        if self.c99.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::Validation("c99 must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Fits a model to one image: basis via [`fit_stains`], percentiles over
    /// its tissue pixels.
    pub fn fit<R: Rng + ?Sized>(img: &RgbImage, opts: FitOptions, rng: &mut R) -> Result<Self> {
        let od = rgb_to_od(img, DEFAULT_I0)?;
        let fit = fit_stains(&od, opts, rng)?;
        let mask = tissue_mask(&od);
        let mut c99 = [0.0; 2];
        for (k, c) in c99.iter_mut().enumerate() {
            let mut vals: Vec<f64> = fit
                .h
                .row(k)
                .iter()
                .zip(&mask)
                .filter(|(_, m)| **m)
                .map(|(v, _)| *v)
                .collect();
            *c = percentile(&mut vals, 0.99);
        }
        Self::new(fit.w, c99)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut w = [0.0; 6];
        for r in 0..3 {
            for c in 0..2 {
                w[2 * r + c] = self.w[(r, c)];
            }
        }
        Ok(serde_json::to_string_pretty(&StainModelJson { w, c99: self.c99 })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: StainModelJson = serde_json::from_str(s)?;
        let w = Matrix3x2::from_row_slice(&j.w);
        Self::new(w, j.c99)
    }
}

/// Nearest-rank percentile; `vals` is sorted in place. Empty input gives 0.
pub fn percentile(vals: &mut [f64], q: f64) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    let rank = (q * vals.len() as f64).ceil() as usize;
    vals[rank.clamp(1, vals.len()) - 1]
}

/// Re-renders `src` with the target stain basis while keeping its own
/// concentrations, rescaled per stain by `tgt.c99 / src.c99`.
///
/// Source concentrations are non-negative least squares against the source
/// basis; the part of each pixel's density outside the stain cone is carried
/// over unchanged, so transferring to the source's own model is the identity
/// up to rounding. Background pixels are copied through untouched.
pub fn normalize_to_target(src: &RgbImage, src_model: &StainModel, tgt_model: &StainModel) -> Result<RgbImage> {
    src_model.validate()?;
    tgt_model.validate()?;
    if let Some(k) = src_model.c99.iter().position(|c| *c <= 0.0) {
        return Err(Error::Degenerate(format!("source c99 for stain {k} is zero")));
    }
    let od = rgb_to_od(src, DEFAULT_I0)?;
    let mask = tissue_mask(&od);
    let h = concentrations(&od, &src_model.w, 0.0)?;
    let scale = [
        tgt_model.c99[0] / src_model.c99[0],
        tgt_model.c99[1] / src_model.c99[1],
    ];
    let mut out_od = od.clone();
    for j in 0..od.ncols() {
        if !mask[j] {
            continue;
        }
        let hj = Vector2::new(h[(0, j)], h[(1, j)]);
        let y = Vector3::new(od[(0, j)], od[(1, j)], od[(2, j)]);
        let residual = y - src_model.w * hj;
        let scaled = Vector2::new(hj[0] * scale[0], hj[1] * scale[1]);
        let out = tgt_model.w * scaled + residual;
        for c in 0..3 {
            out_od[(c, j)] = out[c].max(0.0);
        }
    }
    let mut out = od_to_rgb(&out_od, src.width(), src.height(), DEFAULT_I0)?;
    for (j, &m) in mask.iter().enumerate() {
        if !m {
            let (x, y) = (j % src.width(), j / src.width());
            out.put_pixel(x, y, src.pixel(x, y));
        }
    }
    Ok(out)
}
