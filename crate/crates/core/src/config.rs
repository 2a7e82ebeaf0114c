//! Strict JSON run configuration with documented defaults.
//!
//! Every section and key is optional; omitted values take the defaults
//! below and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoiser::{Activation, DenoiserConfig, DEFAULT_LR};
use crate::diffusion::{LossConfig, Weighting, DEFAULT_VLB_COEF};
use crate::error::{Error, Result};
use crate::patchkit::{TileSpec, DEFAULT_LABELS};
use crate::schedule::{NoiseSchedule, P2Params, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS};

/// Defaults: 1000 steps, betas 1e-4 to 0.02.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { steps: DEFAULT_STEPS, beta_start: DEFAULT_BETA_START, beta_end: DEFAULT_BETA_END }
    }
}

impl ScheduleSection {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

/// Defaults: simple weighting, c = 0.001, k = 1, γ = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub weighting: Weighting,
    pub c: f64,
    pub p2_k: f64,
    pub p2_gamma: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let p2 = P2Params::default();
        Self { weighting: Weighting::Simple, c: DEFAULT_VLB_COEF, p2_k: p2.k, p2_gamma: p2.gamma }
    }
}

impl LossSection {
    pub fn build(&self) -> Result<LossConfig> {
        let cfg = LossConfig { weighting: self.weighting, c: self.c, p2: P2Params::new(self.p2_k, self.p2_gamma)? };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Defaults: two hidden layers of 128, embedding width 32, SiLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub activation: Activation,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = DenoiserConfig::default();
        Self { hidden_dims: d.hidden_dims, embed_dim: d.embed_dim, activation: d.activation }
    }
}

impl ModelSection {
    pub fn build(&self, input_dim: usize, num_labels: usize) -> Result<DenoiserConfig> {
        let cfg = DenoiserConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            embed_dim: self.embed_dim,
            num_labels,
            activation: self.activation,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Defaults: lr 1e-4, batch 4, 5000 steps, seed 0, loss logged every 100 steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { lr: DEFAULT_LR, batch: 4, steps: 5000, seed: 0, log_every: 100 }
    }
}

/// Defaults: the three glioma subtypes, 512 px patches at stride 512,
/// resized to 128, at most 100 per slide, full annotation coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub labels: Vec<String>,
    pub patch: usize,
    pub stride: usize,
    pub resize: usize,
    pub max_per_slide: usize,
    pub coverage: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let t = TileSpec::default();
        Self {
            labels: DEFAULT_LABELS.iter().map(|s| s.to_string()).collect(),
            patch: t.patch_size,
            stride: t.stride,
            resize: t.resize_to,
            max_per_slide: t.max_per_slide,
            coverage: t.coverage_threshold,
        }
    }
}

impl DataSection {
    pub fn tile_spec(&self) -> Result<TileSpec> {
        let spec = TileSpec {
            patch_size: self.patch,
            stride: self.stride,
            resize_to: self.resize,
            max_per_slide: self.max_per_slide,
            coverage_threshold: self.coverage,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: ScheduleSection,
    pub loss: LossSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub data: DataSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    /// Checks every section that can be checked without knowing the data.
    pub fn validate(&self) -> Result<()> {
        self.schedule.build()?;
        self.loss.build()?;
        self.model.build(1, 1)?;
        self.data.tile_spec()?;
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(Error::param(format!("train.lr must be positive, got {}", self.train.lr)));
        }
        if self.train.batch == 0 {
            return Err(Error::param("train.batch must be at least 1"));
        }
        if self.train.log_every == 0 {
            return Err(Error::param("train.log_every must be at least 1"));
        }
        if self.data.labels.is_empty() {
            return Err(Error::param("data.labels must not be empty"));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &self.data.labels {
            if l.is_empty() || !seen.insert(l) {
                return Err(Error::param(format!("data.labels has an empty or duplicate entry {l:?}")));
            }
        }
        Ok(())
    }
}
