//! Forward noising, the weighted training objective, and ancestral sampling.
//!
//! Timesteps are 1-indexed throughout. The reverse kernel uses the fixed
//! variance `σ_t² = β̃_t`, so the final step `t = 1` is deterministic unless
//! `final_step_noise` is requested, in which case `σ_1 = sqrt(β_1)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, Differentiable, Gradients};
use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, P2Params};

pub const DEFAULT_VLB_COEF: f64 = 0.001;

/// A data vector with its conditioning label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub data: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(data: Vec<f64>, label: usize) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("sample entry {v} is not finite")));
        }
        Ok(Self { data, label })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Simple,
    P2,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Simple => "simple",
            Weighting::P2 => "p2",
        }
    }
}

/// Objective `Σ_t w_t L_t + c · L_vlb`.
///
/// Each `L_t` is the KL term of the bound, which for an ε-parameterized
/// model equals `‖ε − ε_θ‖² / λ_t`. Weighting by `λ_t` ([`Weighting::Simple`])
/// therefore yields the plain noise MSE, and weighting by `λ'_t`
/// ([`Weighting::P2`]) yields the MSE scaled by `(k + SNR(t))^-γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub weighting: Weighting,
    pub c: f64,
    pub p2: P2Params,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weighting: Weighting::Simple,
            c: DEFAULT_VLB_COEF,
            p2: P2Params::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::param(format!("vlb coefficient c must be >= 0, got {}", self.c)));
        }
        P2Params::new(self.p2.k, self.p2.gamma)?;
        Ok(())
    }

    /// Multiplier applied to the per-sample noise MSE at step `t`.
    pub fn mse_weight(&self, s: &NoiseSchedule, t: usize) -> Result<f64> {
        match self.weighting {
            Weighting::Simple => {
                s.beta(t)?;
                Ok(1.0)
            }
            Weighting::P2 => Ok(s.p2_weight(t, self.p2)? / s.simple_weight(t)?),
        }
    }
}

/// `x_t = sqrt(ᾱ_t)·x_0 + sqrt(1 − ᾱ_t)·ε`.
pub fn forward_sample(s: &NoiseSchedule, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != x0.len() {
        return Err(Error::shape(x0.len(), eps.len()));
    }
    let ab = s.alpha_bar(t)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// Mean and variance of `q(x_{t-1} | x_t, x_0)`.
pub fn posterior_params(
    s: &NoiseSchedule,
    x0: &[f64],
    xt: &[f64],
    t: usize,
) -> Result<(Vec<f64>, f64)> {
    if xt.len() != x0.len() {
        return Err(Error::shape(x0.len(), xt.len()));
    }
    let b = s.beta(t)?;
    let ab = s.alpha_bar(t)?;
    let ab_prev = s.alpha_bar_prev(t)?;
    let c0 = ab_prev.sqrt() * b / (1.0 - ab);
    let ct = (1.0 - b).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    let mean = x0.iter().zip(xt).map(|(a, x)| c0 * a + ct * x).collect();
    Ok((mean, s.posterior_variance(t)?))
}

/// Model variance used by the bound term. `β̃_1 = 0`, so step 1 borrows
/// `β̃_2` (or `β_1` for a one-step schedule).
fn vlb_variance(s: &NoiseSchedule, t: usize) -> Result<f64> {
    if t == 1 {
        if s.steps() >= 2 {
            s.posterior_variance(2)
        } else {
            s.beta(1)
        }
    } else {
        s.posterior_variance(t)
    }
}

/// Coefficient `κ_t` with `KL(q ‖ p_θ) = κ_t ‖ε − ε_θ‖²` under fixed variance.
pub fn vlb_coefficient(s: &NoiseSchedule, t: usize) -> Result<f64> {
    let b = s.beta(t)?;
    let ab = s.alpha_bar(t)?;
    let mean_scale_sq = b * b / ((1.0 - b) * (1.0 - ab));
    Ok(mean_scale_sq / (2.0 * vlb_variance(s, t)?))
}

/// Timestep and noise drawn for one training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub t: usize,
    pub eps: Vec<f64>,
}

/// Uniform `t ∈ 1..=T` and standard normal `ε`, drawn sample by sample.
pub fn draw_noise<R: Rng + ?Sized>(s: &NoiseSchedule, batch: &[Sample], rng: &mut R) -> Vec<NoiseDraw> {
    batch
        .iter()
        .map(|x| {
            let t = rng.gen_range(1..=s.steps());
            let eps = (0..x.data.len()).map(|_| rng.sample(StandardNormal)).collect();
            NoiseDraw { t, eps }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    /// Total objective.
    pub loss: f64,
    /// Weighted MSE part.
    pub mse: f64,
    /// Bound part before multiplying by `c`.
    pub vlb: f64,
}

struct Prepared {
    xs: DMatrix<f64>,
    eps: DMatrix<f64>,
    ts: Vec<usize>,
    labels: Vec<usize>,
    mse_w: Vec<f64>,
    kl_w: Vec<f64>,
}

fn prepare(s: &NoiseSchedule, batch: &[Sample], draws: &[NoiseDraw], cfg: &LossConfig, dim: usize) -> Result<Prepared> {
    if batch.is_empty() {
        return Err(Error::param("training batch is empty"));
    }
    if draws.len() != batch.len() {
        return Err(Error::shape(batch.len(), draws.len()));
    }
    cfg.validate()?;
    let n = batch.len();
    let mut xs = DMatrix::zeros(dim, n);
    let mut eps = DMatrix::zeros(dim, n);
    let mut ts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut mse_w = Vec::with_capacity(n);
    let mut kl_w = Vec::with_capacity(n);
    for (j, (x, d)) in batch.iter().zip(draws).enumerate() {
        if x.data.len() != dim {
            return Err(Error::shape(dim, x.data.len()));
        }
        let xt = forward_sample(s, &x.data, d.t, &d.eps)?;
        xs.column_mut(j).copy_from_slice(&xt);
        eps.column_mut(j).copy_from_slice(&d.eps);
        ts.push(d.t);
        labels.push(x.label);
        mse_w.push(cfg.mse_weight(s, d.t)?);
        kl_w.push(vlb_coefficient(s, d.t)?);
    }
    Ok(Prepared { xs, eps, ts, labels, mse_w, kl_w })
}

fn reduce(p: &Prepared, pred: &DMatrix<f64>, c: f64) -> (LossValue, DMatrix<f64>) {
    let n = p.ts.len() as f64;
    let d = p.xs.nrows() as f64;
    let mut mse = 0.0;
    let mut vlb = 0.0;
    let mut upstream = pred - &p.eps;
    for (j, mut col) in upstream.column_iter_mut().enumerate() {
        let sq = col.norm_squared() / d;
        mse += p.mse_w[j] * sq;
        vlb += p.kl_w[j] * sq;
        col *= 2.0 * (p.mse_w[j] + c * p.kl_w[j]) / (n * d);
    }
    let (mse, vlb) = (mse / n, vlb / n);
    (LossValue { loss: mse + c * vlb, mse, vlb }, upstream)
}

/// Objective value for fixed draws, without gradients.
pub fn loss_with_draws<M: Denoiser + ?Sized>(
    model: &M,
    s: &NoiseSchedule,
    batch: &[Sample],
    draws: &[NoiseDraw],
    cfg: &LossConfig,
) -> Result<LossValue> {
    let p = prepare(s, batch, draws, cfg, model.dim())?;
    let pred = model.predict_eps_batch(&p.xs, &p.ts, &p.labels)?;
    Ok(reduce(&p, &pred, cfg.c).0)
}

/// Objective value and parameter gradients for fixed draws.
pub fn loss_and_grads_with_draws<M: Differentiable + ?Sized>(
    model: &M,
    s: &NoiseSchedule,
    batch: &[Sample],
    draws: &[NoiseDraw],
    cfg: &LossConfig,
) -> Result<(LossValue, Gradients)> {
    let p = prepare(s, batch, draws, cfg, model.dim())?;
    let pred = model.predict_eps_batch(&p.xs, &p.ts, &p.labels)?;
    let (value, upstream) = reduce(&p, &pred, cfg.c);
    let grads = model.backward_batch(&p.xs, &p.ts, &p.labels, &upstream)?;
    Ok((value, grads))
}

/// Draws `(t, ε)` per sample from `rng`, then evaluates the objective and its gradients.
pub fn training_loss<M: Differentiable + ?Sized, R: Rng + ?Sized>(
    model: &M,
    s: &NoiseSchedule,
    batch: &[Sample],
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<(LossValue, Gradients)> {
    if batch.is_empty() {
        return Err(Error::param("training batch is empty"));
    }
    let draws = draw_noise(s, batch, rng);
    loss_and_grads_with_draws(model, s, batch, &draws, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SamplerOptions {
    /// Inject `sqrt(β_1)·z` at the last step instead of returning the mean.
    pub final_step_noise: bool,
}

fn step_coefficients(s: &NoiseSchedule, t: usize, opts: SamplerOptions) -> Result<(f64, f64, f64)> {
    let b = s.beta(t)?;
    let ab = s.alpha_bar(t)?;
    let c1 = 1.0 / (1.0 - b).sqrt();
    let c2 = b / (1.0 - ab).sqrt();
    let sigma = if t == 1 {
        if opts.final_step_noise {
            b.sqrt()
        } else {
            0.0
        }
    } else {
        s.posterior_variance(t)?.sqrt()
    };
    Ok((c1, c2, sigma))
}

/// One ancestral step `x_{t-1} = C1·(x_t − C2·ε_θ(x_t, t, g)) + σ_t·z`.
pub fn reverse_step<M: Denoiser + ?Sized>(
    model: &M,
    s: &NoiseSchedule,
    xt: &[f64],
    t: usize,
    label: usize,
    z: &[f64],
) -> Result<Vec<f64>> {
    reverse_step_with(model, s, xt, t, label, z, SamplerOptions::default())
}

pub fn reverse_step_with<M: Denoiser + ?Sized>(
    model: &M,
    s: &NoiseSchedule,
    xt: &[f64],
    t: usize,
    label: usize,
    z: &[f64],
    opts: SamplerOptions,
) -> Result<Vec<f64>> {
    if xt.len() != model.dim() {
        return Err(Error::shape(model.dim(), xt.len()));
    }
    if z.len() != xt.len() {
        return Err(Error::shape(xt.len(), z.len()));
    }
    let (c1, c2, sigma) = step_coefficients(s, t, opts)?;
    let eps = model.predict_eps(xt, t, label)?;
    Ok(xt
        .iter()
        .zip(&eps)
        .zip(z)
        .map(|((x, e), z)| c1 * (x - c2 * e) + sigma * z)
        .collect())
}

/// Runs the reverse chain from `x_T ~ N(0, I)` down to `t = 1` for `count`
/// samples conditioned on `label`. The initial noise is drawn column by
/// column, then each step draws its `z` the same way.
pub fn sample<M: Denoiser + ?Sized, R: Rng + ?Sized>(
    model: &M,
    s: &NoiseSchedule,
    label: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    sample_with(model, s, label, count, rng, SamplerOptions::default())
}

pub fn sample_with<M: Denoiser + ?Sized, R: Rng + ?Sized>(
    model: &M,
    s: &NoiseSchedule,
    label: usize,
    count: usize,
    rng: &mut R,
    opts: SamplerOptions,
) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::param("sample count must be at least 1"));
    }
    if label >= model.num_labels() {
        return Err(Error::param(format!(
            "label {label} out of range 0..{}",
            model.num_labels()
        )));
    }
    let d = model.dim();
    let mut x = DMatrix::<f64>::from_fn(d, count, |_, _| 0.0);
    for v in x.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let labels = vec![label; count];
    let mut ts = vec![0; count];
    for t in (1..=s.steps()).rev() {
        let (c1, c2, sigma) = step_coefficients(s, t, opts)?;
        ts.fill(t);
        let eps = model.predict_eps_batch(&x, &ts, &labels)?;
        x.zip_apply(&eps, |xv, e| *xv = c1 * (*xv - c2 * e));
        if sigma > 0.0 {
            for v in x.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sigma * z;
            }
        }
    }
    Ok(x.column_iter().map(|c| c.iter().copied().collect()).collect())
}

/// Exact noise predictor for data `x_0 ~ N(m, s²·I)`.
///
/// `x_t` and `x_0` are jointly Gaussian with `Var(x_t) = ᾱ s² + 1 − ᾱ` and
/// `Cov(x_0, x_t) = sqrt(ᾱ) s²` per coordinate, so
/// `E[x_0 | x_t] = a_t·x_t + b_t` with `a_t = sqrt(ᾱ) s² / (ᾱ s² + 1 − ᾱ)`
/// and `b_t = m·(1 − a_t·sqrt(ᾱ))`, and the optimal prediction is
/// `ε* = (x_t − sqrt(ᾱ)·E[x_0 | x_t]) / sqrt(1 − ᾱ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticGaussianDenoiser {
    mean: Vec<f64>,
    var: f64,
    schedule: NoiseSchedule,
}

impl AnalyticGaussianDenoiser {
    pub fn new(mean: Vec<f64>, var: f64, schedule: NoiseSchedule) -> Result<Self> {
        if !(var >= 0.0 && var.is_finite()) {
            return Err(Error::param(format!("prior variance must be >= 0, got {var}")));
        }
        if mean.is_empty() {
            return Err(Error::param("prior mean must be non-empty"));
        }
        Ok(Self { mean, var, schedule })
    }

    /// `(a_t, b_t)` per coordinate such that `E[x_0 | x_t] = a_t·x_t + b_t`.
    pub fn conditional_mean_coefficients(&self, t: usize) -> Result<(f64, Vec<f64>)> {
        let ab = self.schedule.alpha_bar(t)?;
        let a = ab.sqrt() * self.var / (ab * self.var + 1.0 - ab);
        let scale = 1.0 - a * ab.sqrt();
        Ok((a, self.mean.iter().map(|m| m * scale).collect()))
    }

    pub fn conditional_mean(&self, xt: &[f64], t: usize) -> Result<Vec<f64>> {
        if xt.len() != self.mean.len() {
            return Err(Error::shape(self.mean.len(), xt.len()));
        }
        let (a, b) = self.conditional_mean_coefficients(t)?;
        Ok(xt.iter().zip(&b).map(|(x, b)| a * x + b).collect())
    }
}

impl Denoiser for AnalyticGaussianDenoiser {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn num_labels(&self) -> usize {
        1
    }

    fn predict_eps(&self, x: &[f64], t: usize, _label: usize) -> Result<Vec<f64>> {
        let x0 = self.conditional_mean(x, t)?;
        let ab = self.schedule.alpha_bar(t)?;
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x.iter().zip(&x0).map(|(x, m)| (x - sa * m) / sn).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::default_linear()
    }

    #[test]
    fn forward_zero_noise_scales_input() {
        let s = sched();
        let x0 = [1.5, -2.0];
        let out = forward_sample(&s, &x0, 500, &[0.0, 0.0]).unwrap();
        let a = s.alpha_bar(500).unwrap().sqrt();
        assert_eq!(out, vec![a * 1.5, a * -2.0]);
    }

    #[test]
    fn forward_identity_limit() {
        let s = NoiseSchedule::from_betas(vec![1e-12]).unwrap();
        let out = forward_sample(&s, &[3.0, -1.0], 1, &[0.7, 0.2]).unwrap();
        assert!((out[0] - 3.0).abs() < 1e-5 && (out[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn forward_shape_error() {
        let s = sched();
        assert!(matches!(forward_sample(&s, &[1.0, 2.0], 3, &[0.0]), Err(Error::Shape { .. })));
        assert!(matches!(forward_sample(&s, &[1.0], 0, &[0.0]), Err(Error::Index { .. })));
    }

    #[test]
    fn posterior_first_step_is_x0() {
        let s = sched();
        let (mean, var) = posterior_params(&s, &[0.25, -1.0], &[9.0, 4.0], 1).unwrap();
        assert_eq!(var, 0.0);
        assert!((mean[0] - 0.25).abs() < 1e-12 && (mean[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_zero_inputs() {
        let s = sched();
        let (mean, _) = posterior_params(&s, &[0.0; 3], &[0.0; 3], 321).unwrap();
        assert_eq!(mean, vec![0.0; 3]);
        assert!(posterior_params(&s, &[0.0], &[0.0], 1001).is_err());
    }

    #[test]
    fn reverse_step_reductions() {
        let s = sched();
        let zero = AnalyticGaussianDenoiser::new(vec![0.0, 0.0], 1.0, s.clone()).unwrap();
        // m = 0, s² = 1 makes ε* = sqrt(1-ᾱ)·x_t, so use an explicit zero model instead.
        struct Zero;
        impl Denoiser for Zero {
            fn dim(&self) -> usize {
                2
            }
            fn num_labels(&self) -> usize {
                1
            }
            fn predict_eps(&self, _x: &[f64], _t: usize, _g: usize) -> Result<Vec<f64>> {
                Ok(vec![0.0, 0.0])
            }
        }
        let out = reverse_step(&Zero, &s, &[1.0, -2.0], 400, 0, &[0.0, 0.0]).unwrap();
        let c1 = 1.0 / (1.0 - s.beta(400).unwrap()).sqrt();
        assert_eq!(out, vec![c1, -2.0 * c1]);
        assert_eq!(reverse_step(&Zero, &s, &[0.0, 0.0], 400, 0, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(reverse_step(&zero, &s, &[0.0, 0.0], 10, 0, &[0.0]).is_err());
    }

    #[test]
    fn last_step_noise_flag() {
        let s = sched();
        let den = AnalyticGaussianDenoiser::new(vec![0.0], 1.0, s.clone()).unwrap();
        let a = reverse_step(&den, &s, &[0.3], 1, 0, &[5.0]).unwrap();
        let b = reverse_step(&den, &s, &[0.3], 1, 0, &[0.0]).unwrap();
        assert_eq!(a, b);
        let opts = SamplerOptions { final_step_noise: true };
        let c = reverse_step_with(&den, &s, &[0.3], 1, 0, &[5.0], opts).unwrap();
        assert!((c[0] - b[0] - 5.0 * s.beta(1).unwrap().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sample_shape_and_determinism() {
        let s = NoiseSchedule::linear(50, 1e-4, 0.2).unwrap();
        let den = AnalyticGaussianDenoiser::new(vec![1.0, 2.0], 0.5, s.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample(&den, &s, 0, 0, &mut rng).is_err());
        assert!(sample(&den, &s, 1, 1, &mut rng).is_err());
        let one = sample(&den, &s, 0, 1, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 2);
        let a = sample(&den, &s, 0, 5, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = sample(&den, &s, 0, 5, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn analytic_unit_prior() {
        let s = sched();
        let den = AnalyticGaussianDenoiser::new(vec![0.0, 0.0], 1.0, s.clone()).unwrap();
        let xt = [0.4, -1.1];
        let got = den.conditional_mean(&xt, 250).unwrap();
        let sa = s.alpha_bar(250).unwrap().sqrt();
        for (g, x) in got.iter().zip(xt) {
            assert!((g - sa * x).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_degenerate_prior() {
        let s = sched();
        let den = AnalyticGaussianDenoiser::new(vec![2.0, -3.0], 0.0, s).unwrap();
        assert_eq!(den.conditional_mean(&[10.0, 10.0], 900).unwrap(), vec![2.0, -3.0]);
        assert!(AnalyticGaussianDenoiser::new(vec![0.0], -1.0, sched()).is_err());
    }

    #[test]
    fn perfect_denoiser_has_zero_mse() {
        let s = sched();
        let x0 = vec![0.7, -0.2, 1.3];
        let oracle = AnalyticGaussianDenoiser::new(x0.clone(), 0.0, s.clone()).unwrap();
        let batch = vec![Sample::new(x0, 0).unwrap(); 16];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = draw_noise(&s, &batch, &mut rng);
        let v = loss_with_draws(&oracle, &s, &batch, &draws, &LossConfig::default()).unwrap();
        assert!(v.mse < 1e-20, "mse = {}", v.mse);
        assert!(v.loss < 1e-20);
    }

    #[test]
    fn vlb_off_leaves_weighted_mse() {
        let s = sched();
        let model = AnalyticGaussianDenoiser::new(vec![0.0, 0.0], 1.0, s.clone()).unwrap();
        let batch: Vec<Sample> = (0..8)
            .map(|i| Sample::new(vec![i as f64 * 0.3, 1.0 - i as f64], 0).unwrap())
            .collect();
        let draws = draw_noise(&s, &batch, &mut ChaCha8Rng::seed_from_u64(8));
        for weighting in [Weighting::Simple, Weighting::P2] {
            let cfg = LossConfig { weighting, c: 0.0, ..Default::default() };
            let v = loss_with_draws(&model, &s, &batch, &draws, &cfg).unwrap();
            assert_eq!(v.loss, v.mse);
            assert!(v.vlb > 0.0);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let s = sched();
        let model = AnalyticGaussianDenoiser::new(vec![0.0], 1.0, s.clone()).unwrap();
        assert!(matches!(
            loss_with_draws(&model, &s, &[], &[], &LossConfig::default()),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn p2_mse_weight_is_snr_factor() {
        let s = sched();
        let cfg = LossConfig { weighting: Weighting::P2, ..Default::default() };
        for t in [1, 10, 300, 1000] {
            let w = cfg.mse_weight(&s, t).unwrap();
            let expect = 1.0 / (1.0 + s.snr(t).unwrap());
            assert!((w - expect).abs() < 1e-12 * expect.max(1e-300));
        }
    }

    #[test]
    fn vlb_coefficient_inverts_simple_weight_when_variance_is_beta() {
        // With σ_t² = β_t the bound coefficient is 1/(2 λ_t); with β̃_t it is larger.
        let s = sched();
        for t in [2, 50, 999] {
            let k = vlb_coefficient(&s, t).unwrap();
            let lam = s.simple_weight(t).unwrap();
            let ratio = s.beta(t).unwrap() / s.posterior_variance(t).unwrap();
            assert!((k - ratio / (2.0 * lam)).abs() < 1e-9 * k);
        }
    }
}
