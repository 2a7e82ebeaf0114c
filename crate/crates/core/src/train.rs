//! Minibatch training loop and data sources.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::denoiser::{Adam, Differentiable};
use crate::diffusion::{training_loss, LossConfig, Sample};
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

/// Anything that can hand out labeled training batches.
pub trait DataSource {
    fn dim(&self) -> usize;
    fn num_labels(&self) -> usize;
    fn draw_batch(&self, rng: &mut dyn rand::RngCore, size: usize) -> Vec<Sample>;
}

/// Two isotropic Gaussian clusters, one per label.
///
/// Label 0 is centered at `(-3, 0)` and label 1 at `(+3, 0)`, both with
/// per-coordinate variance 0.25.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoGaussians {
    pub means: [[f64; 2]; 2],
    pub var: f64,
}

impl Default for TwoGaussians {
    fn default() -> Self {
        Self { means: [[-3.0, 0.0], [3.0, 0.0]], var: 0.25 }
    }
}

impl DataSource for TwoGaussians {
    fn dim(&self) -> usize {
        2
    }

    fn num_labels(&self) -> usize {
        2
    }

    fn draw_batch(&self, rng: &mut dyn rand::RngCore, size: usize) -> Vec<Sample> {
        let sd = self.var.sqrt();
        (0..size)
            .map(|_| {
                let label = rng.gen_range(0..2);
                let m = self.means[label];
                let data = m
                    .iter()
                    .map(|c| {
                        let z: f64 = rng.sample(StandardNormal);
                        c + sd * z
                    })
                    .collect();
                Sample { data, label }
            })
            .collect()
    }
}

/// A fixed in-memory dataset sampled uniformly with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    samples: Vec<Sample>,
    dim: usize,
    num_labels: usize,
}

impl VectorDataset {
    pub fn new(samples: Vec<Sample>, num_labels: usize) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::param("dataset is empty"))?;
        let dim = first.data.len();
        for s in &samples {
            if s.data.len() != dim {
                return Err(Error::shape(dim, s.data.len()));
            }
            if s.label >= num_labels {
                return Err(Error::param(format!("label {} out of range 0..{num_labels}", s.label)));
            }
        }
        Ok(Self { samples, dim, num_labels })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

impl DataSource for VectorDataset {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_labels(&self) -> usize {
        self.num_labels
    }

    fn draw_batch(&self, rng: &mut dyn rand::RngCore, size: usize) -> Vec<Sample> {
        (0..size)
            .map(|_| self.samples[rng.gen_range(0..self.samples.len())].clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { steps: 5000, batch: 4, lr: crate::denoiser::DEFAULT_LR }
    }
}

/// Runs `opts.steps` Adam updates and returns the per-step training loss.
///
/// Every random draw (batch, timesteps, noise) comes from `rng`, in that
/// order for each step. `on_step` sees `(step, loss)` with 1-based steps.
pub fn train<M, D, R, F>(
    model: &mut M,
    schedule: &NoiseSchedule,
    loss: &LossConfig,
    data: &D,
    opts: &TrainOptions,
    rng: &mut R,
    mut on_step: F,
) -> Result<Vec<f64>>
where
    M: Differentiable,
    D: DataSource + ?Sized,
    R: rand::RngCore,
    F: FnMut(usize, f64),
{
    if opts.batch == 0 {
        return Err(Error::param("batch size must be at least 1"));
    }
    if !(opts.lr > 0.0 && opts.lr.is_finite()) {
        return Err(Error::param(format!("learning rate must be positive, got {}", opts.lr)));
    }
    if data.dim() != model.dim() {
        return Err(Error::shape(model.dim(), data.dim()));
    }
    if data.num_labels() > model.num_labels() {
        return Err(Error::param(format!(
            "data has {} labels but the model accepts {}",
            data.num_labels(),
            model.num_labels()
        )));
    }
    loss.validate()?;
    let mut opt = Adam::new(model, opts.lr);
    let mut history = Vec::with_capacity(opts.steps);
    for step in 1..=opts.steps {
        let batch = data.draw_batch(rng, opts.batch);
        let (value, grads) = training_loss(model, schedule, &batch, loss, rng)?;
        if !value.loss.is_finite() {
            return Err(Error::Numeric(format!("loss diverged at step {step}")));
        }
        opt.step(model, &grads)?;
        history.push(value.loss);
        on_step(step, value.loss);
    }
    Ok(history)
}

/// Trailing moving average with the given window (shorter at the start).
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}
