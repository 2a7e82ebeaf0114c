//! Closed-form per-timestep constants of the forward noising process.
//!
//! All public accessors take a 1-indexed timestep `t` in `1..=steps`.
//! `alpha_bar(0)` is defined as 1 so that boundary formulas at `t = 1`
//! need no special casing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Perception-prioritized weighting parameters: `λ'_t = λ_t / (k + SNR(t))^γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P2Params {
    pub k: f64,
    pub gamma: f64,
}

impl Default for P2Params {
    fn default() -> Self {
        Self { k: 1.0, gamma: 1.0 }
    }
}

impl P2Params {
    pub fn new(k: f64, gamma: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::param(format!("p2 k must be finite and >= 0, got {k}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::param(format!("p2 gamma must be finite and >= 0, got {gamma}")));
        }
        Ok(Self { k, gamma })
    }
}

/// Immutable noise schedule: `betas` and the cumulative signal fractions
/// `alpha_bars[t] = Π_{s<=t} (1 - beta_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linearly spaced betas from `beta_start` (t = 1) to `beta_end` (t = steps).
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::param("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::param(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"
            )));
        }
        let betas = if steps == 1 {
            vec![beta_start]
        } else {
            let span = beta_end - beta_start;
            let last = (steps - 1) as f64;
            (0..steps)
                .map(|i| beta_start + (i as f64) / last * span)
                .collect()
        };
        Self::from_betas(betas)
    }

    /// Default linear schedule, 1000 steps from 1e-4 to 0.02.
    pub fn default_linear() -> Self {
        Self::linear(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }

    /// Builds a schedule from an explicit beta sequence (index 0 is t = 1).
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::param("schedule needs at least one step"));
        }
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > 0.0 && b < 1.0))
        {
            return Err(Error::param(format!("beta_{} = {b} not in (0, 1)", i + 1)));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for &b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            Err(Error::Index { t, steps: self.steps() })
        } else {
            Ok(t - 1)
        }
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        Ok(self.betas[self.check(t)?])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bars[self.check(t)?])
    }

    /// `alpha_bar(t - 1)`, with `alpha_bar(0) = 1`.
    pub fn alpha_bar_prev(&self, t: usize) -> Result<f64> {
        let i = self.check(t)?;
        Ok(if i == 0 { 1.0 } else { self.alpha_bars[i - 1] })
    }

    /// Signal-to-noise ratio `ᾱ_t / (1 - ᾱ_t)`.
    pub fn snr(&self, t: usize) -> Result<f64> {
        let ab = self.alpha_bar(t)?;
        Ok(ab / (1.0 - ab))
    }

    /// Standard weight `λ_t = (1 - β_t)(1 - ᾱ_t) / β_t`.
    pub fn simple_weight(&self, t: usize) -> Result<f64> {
        let b = self.beta(t)?;
        let ab = self.alpha_bar(t)?;
        Ok((1.0 - b) * (1.0 - ab) / b)
    }

    /// Perception-prioritized weight `λ_t / (k + SNR(t))^γ`.
    pub fn p2_weight(&self, t: usize, p: P2Params) -> Result<f64> {
        let lambda = self.simple_weight(t)?;
        if p.gamma == 0.0 {
            return Ok(lambda);
        }
        Ok(lambda / (p.k + self.snr(t)?).powf(p.gamma))
    }

    /// Variance of the true posterior `q(x_{t-1} | x_t, x_0)`:
    /// `β̃_t = (1 - ᾱ_{t-1}) / (1 - ᾱ_t) · β_t`. Zero at `t = 1`.
    pub fn posterior_variance(&self, t: usize) -> Result<f64> {
        let b = self.beta(t)?;
        let ab = self.alpha_bar(t)?;
        let ab_prev = self.alpha_bar_prev(t)?;
        Ok((1.0 - ab_prev) / (1.0 - ab) * b)
    }
}
