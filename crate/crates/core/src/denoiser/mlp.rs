use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::{check_batch, write_time_embedding, Denoiser, Differentiable, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `x · sigmoid(x)`
    #[default]
    Silu,
    Tanh,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Silu => a * sigmoid(a),
            Activation::Tanh => a.tanh(),
        }
    }

    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(a);
                s * (1.0 + a * (1.0 - s))
            }
            Activation::Tanh => {
                let th = a.tanh();
                1.0 - th * th
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Silu => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Silu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub num_labels: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            input_dim: 2,
            hidden_dims: vec![128, 128],
            embed_dim: 32,
            num_labels: 2,
            activation: Activation::Silu,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::param("input_dim must be positive"));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(Error::param(format!(
                "embed_dim must be positive and even, got {}",
                self.embed_dim
            )));
        }
        if self.num_labels == 0 {
            return Err(Error::param("num_labels must be positive"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::param("hidden layer widths must be positive"));
        }
        Ok(())
    }

    /// Width of the first layer's input: `[x; time embedding; label embedding]`.
    pub fn first_layer_inputs(&self) -> usize {
        self.input_dim + 2 * self.embed_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    /// `out × in`
    pub(crate) w: DMatrix<f64>,
    pub(crate) b: DVector<f64>,
}

/// Fully-connected noise predictor.
///
/// The first layer sees `concat(x, time_embedding(t), label_embedding[g])`,
/// which is the same as adding projected time and label embeddings to the
/// projected input. Hidden layers use the configured activation; the output
/// layer is linear with width `input_dim`.
///
/// Parameter tensor order (used by the optimizer and checkpoints): for each
/// layer its weight (column-major) then bias, followed by the label table.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    config: DenoiserConfig,
    layers: Vec<Dense>,
    /// `embed_dim × num_labels`; column `g` is the embedding of label `g`.
    label_embed: DMatrix<f64>,
}

impl DenoiserModel {
    /// Seeded initialization: layer weights and biases uniform in
    /// `±1/sqrt(fan_in)`, label embeddings uniform in `±1`, drawn in tensor
    /// order from a ChaCha8 stream.
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![config.first_layer_inputs()];
        widths.extend(&config.hidden_dims);
        widths.push(config.input_dim);
        let layers = widths
            .windows(2)
            .map(|io| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let w = DMatrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-bound..=bound));
                let b = DVector::from_fn(fan_out, |_, _| rng.gen_range(-bound..=bound));
                Dense { w, b }
            })
            .collect();
        let label_embed =
            DMatrix::from_fn(config.embed_dim, config.num_labels, |_, _| rng.gen_range(-1.0..=1.0));
        Ok(Self { config, layers, label_embed })
    }

    /// Model with every parameter set to zero.
    pub fn zeros(config: DenoiserConfig) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        for p in m.params_mut() {
            p.fill(0.0);
        }
        Ok(m)
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn label_embedding(&self, label: usize) -> Option<&[f64]> {
        (label < self.config.num_labels).then(|| {
            let e = self.config.embed_dim;
            &self.label_embed.as_slice()[label * e..(label + 1) * e]
        })
    }

    /// Rounds every parameter to the nearest `f32`, the checkpoint precision.
    pub fn quantize_f32(&mut self) {
        for p in self.params_mut() {
            for v in p.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Lengths of every parameter tensor, in tensor order.
    pub fn tensor_lengths(&self) -> Vec<usize> {
        self.params().iter().map(|p| p.len()).collect()
    }

    fn first_input(&self, xs: &DMatrix<f64>, ts: &[usize], labels: &[usize]) -> Result<DMatrix<f64>> {
        let d = self.config.input_dim;
        let e = self.config.embed_dim;
        let mut input = DMatrix::zeros(self.config.first_layer_inputs(), xs.ncols());
        for (j, (&t, &g)) in ts.iter().zip(labels).enumerate() {
            let emb = self.label_embedding(g).ok_or_else(|| {
                Error::param(format!("label {g} out of range 0..{}", self.config.num_labels))
            })?;
            let mut col = input.column_mut(j);
            let col = col.as_mut_slice();
            col[..d].copy_from_slice(xs.column(j).as_slice());
            write_time_embedding(t, &mut col[d..d + e])?;
            col[d + e..].copy_from_slice(emb);
        }
        Ok(input)
    }

    /// Forward pass keeping every layer input and pre-activation.
    fn forward_trace(&self, input: DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DMatrix<f64>) {
        let act = self.config.activation;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut z = input;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut a = &layer.w * &z;
            for mut col in a.column_iter_mut() {
                col += &layer.b;
            }
            inputs.push(z);
            if l == last {
                return (inputs, pre, a);
            }
            z = a.map(|v| act.apply(v));
            pre.push(a);
        }
        unreachable!("network has at least one layer")
    }
}

impl Denoiser for DenoiserModel {
    fn dim(&self) -> usize {
        self.config.input_dim
    }

    fn num_labels(&self) -> usize {
        self.config.num_labels
    }

    fn predict_eps(&self, x: &[f64], t: usize, label: usize) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape(self.dim(), x.len()));
        }
        let xs = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.predict_eps_batch(&xs, &[t], &[label])?.as_slice().to_vec())
    }

    fn predict_eps_batch(
        &self,
        xs: &DMatrix<f64>,
        ts: &[usize],
        labels: &[usize],
    ) -> Result<DMatrix<f64>> {
        check_batch(self.dim(), xs, ts, labels)?;
        let input = self.first_input(xs, ts, labels)?;
        Ok(self.forward_trace(input).2)
    }
}

impl Differentiable for DenoiserModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.layers.len() + 1);
        for layer in &self.layers {
            out.push(layer.w.as_slice());
            out.push(layer.b.as_slice());
        }
        out.push(self.label_embed.as_slice());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.layers.len() + 1);
        for layer in &mut self.layers {
            out.push(layer.w.as_mut_slice());
            out.push(layer.b.as_mut_slice());
        }
        out.push(self.label_embed.as_mut_slice());
        out
    }

    fn backward_batch(
        &self,
        xs: &DMatrix<f64>,
        ts: &[usize],
        labels: &[usize],
        upstream: &DMatrix<f64>,
    ) -> Result<Gradients> {
        check_batch(self.dim(), xs, ts, labels)?;
        if upstream.nrows() != self.dim() {
            return Err(Error::shape(self.dim(), upstream.nrows()));
        }
        if upstream.ncols() != xs.ncols() {
            return Err(Error::shape(xs.ncols(), upstream.ncols()));
        }
        let act = self.config.activation;
        let input = self.first_input(xs, ts, labels)?;
        let (inputs, pre, _) = self.forward_trace(input);

        let mut layer_grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let dw = &delta * inputs[l].transpose();
            let db = delta.column_sum();
            let back = self.layers[l].w.transpose() * &delta;
            layer_grads.push((dw, db));
            if l > 0 {
                delta = back.zip_map(&pre[l - 1], |g, a| g * act.derivative(a));
            } else {
                delta = back;
            }
        }
        layer_grads.reverse();

        // Rows past input_dim + embed_dim of the first-layer input gradient
        // belong to the label embedding.
        let offset = self.config.input_dim + self.config.embed_dim;
        let e = self.config.embed_dim;
        let mut embed_grad = DMatrix::<f64>::zeros(e, self.config.num_labels);
        for (j, &g) in labels.iter().enumerate() {
            for r in 0..e {
                embed_grad[(r, g)] += delta[(offset + r, j)];
            }
        }

        let mut tensors = Vec::with_capacity(2 * self.layers.len() + 1);
        for (dw, db) in layer_grads {
            tensors.push(dw.as_slice().to_vec());
            tensors.push(db.as_slice().to_vec());
        }
        tensors.push(embed_grad.as_slice().to_vec());
        Ok(Gradients { tensors })
    }
}
