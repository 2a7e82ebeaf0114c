//! The noise predictor `ε_θ(x, t, g)`.
//!
//! [`Denoiser`] is the inference interface consumed by the sampler and the
//! loss; [`Differentiable`] adds parameter access and reverse-mode gradients
//! for anything the optimizer trains. [`DenoiserModel`] is the reference
//! fully-connected network.

mod adam;
mod mlp;

pub use adam::{Adam, DEFAULT_LR};
pub use mlp::{Activation, DenoiserConfig, DenoiserModel};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Noise predictor evaluated on a single point or on a batch whose columns
/// are samples.
pub trait Denoiser: Sync {
    /// Data dimension `D`; output has the same dimension.
    fn dim(&self) -> usize;

    /// Number of accepted conditioning labels.
    fn num_labels(&self) -> usize;

    fn predict_eps(&self, x: &[f64], t: usize, label: usize) -> Result<Vec<f64>>;

    /// Batched prediction; `xs` is `D × B`, one column per sample.
    fn predict_eps_batch(
        &self,
        xs: &DMatrix<f64>,
        ts: &[usize],
        labels: &[usize],
    ) -> Result<DMatrix<f64>> {
        check_batch(self.dim(), xs, ts, labels)?;
        let mut out = DMatrix::zeros(xs.nrows(), xs.ncols());
        for (j, (&t, &g)) in ts.iter().zip(labels).enumerate() {
            let eps = self.predict_eps(xs.column(j).as_slice(), t, g)?;
            out.column_mut(j).copy_from_slice(&eps);
        }
        Ok(out)
    }
}

/// Per-tensor gradients, in the order returned by [`Differentiable::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &[&[f64]]) -> Self {
        Self {
            tensors: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.tensors.iter_mut().flatten() {
            *v *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// A trainable denoiser.
pub trait Differentiable: Denoiser {
    fn params(&self) -> Vec<&[f64]>;

    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    /// Exact gradients of `Σ_j ⟨upstream_j, ε_θ(x_j, t_j, g_j)⟩` with respect
    /// to every parameter tensor.
    fn backward_batch(
        &self,
        xs: &DMatrix<f64>,
        ts: &[usize],
        labels: &[usize],
        upstream: &DMatrix<f64>,
    ) -> Result<Gradients>;

    fn backward(&self, x: &[f64], t: usize, label: usize, upstream: &[f64]) -> Result<Gradients> {
        if x.len() != self.dim() {
            return Err(Error::shape(self.dim(), x.len()));
        }
        if upstream.len() != self.dim() {
            return Err(Error::shape(self.dim(), upstream.len()));
        }
        let xs = DMatrix::from_column_slice(x.len(), 1, x);
        let up = DMatrix::from_column_slice(upstream.len(), 1, upstream);
        self.backward_batch(&xs, &[t], &[label], &up)
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Sinusoidal timestep embedding of even width `dim`:
/// `emb[2i] = sin(t·ω_i)`, `emb[2i+1] = cos(t·ω_i)`, `ω_i = 10000^(-2i/dim)`.
///
/// `t = 0` is accepted and yields alternating zeros and ones.
pub fn time_embedding(t: usize, dim: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dim];
    write_time_embedding(t, &mut out)?;
    Ok(out)
}

pub(crate) fn write_time_embedding(t: usize, out: &mut [f64]) -> Result<()> {
    let dim = out.len();
    if dim % 2 != 0 {
        return Err(Error::param(format!("time embedding width must be even, got {dim}")));
    }
    let t = t as f64;
    for i in 0..dim / 2 {
        let omega = 10000f64.powf(-2.0 * i as f64 / dim as f64);
        let (s, c) = (t * omega).sin_cos();
        out[2 * i] = s;
        out[2 * i + 1] = c;
    }
    Ok(())
}

pub(crate) fn check_batch(
    dim: usize,
    xs: &DMatrix<f64>,
    ts: &[usize],
    labels: &[usize],
) -> Result<()> {
    if xs.nrows() != dim {
        return Err(Error::shape(dim, xs.nrows()));
    }
    if ts.len() != xs.ncols() {
        return Err(Error::shape(xs.ncols(), ts.len()));
    }
    if labels.len() != xs.ncols() {
        return Err(Error::shape(xs.ncols(), labels.len()));
    }
    Ok(())
}
