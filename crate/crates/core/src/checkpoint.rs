//! Binary checkpoint: schedule, label set, model dimensions and weights.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MDF1" | version u32
//! steps u32 | beta_start f64 | beta_end f64
//! label count u32 | per label: byte length u32, UTF-8 bytes
//! input_dim u32 | image_side u32 | embed_dim u32 | activation u8
//! hidden count u32 | hidden widths u32...
//! parameter count u64 | parameters f32...
//! CRC32 of everything above, u32
//! ```

use std::io::Write;
use std::path::Path;

use crate::denoiser::{Activation, DenoiserConfig, DenoiserModel, Differentiable};
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

const MAGIC: &[u8; 4] = b"MDF1";
pub const FORMAT_VERSION: u32 = 1;

/// Parameters of the linear schedule the model was trained with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl ScheduleParams {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub schedule: ScheduleParams,
    pub labels: Vec<String>,
    /// Side of the square RGB patches the model generates; 0 for plain vectors.
    pub image_side: usize,
    model: DenoiserModel,
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::param(format!("{what} {v} does not fit in u32")))
}

impl Checkpoint {
    /// Rounds the weights to f32 so that saving and loading is lossless.
    pub fn new(schedule: ScheduleParams, labels: Vec<String>, image_side: usize, mut model: DenoiserModel) -> Result<Self> {
        schedule.build()?;
        let cfg = model.config();
        if labels.len() != cfg.num_labels {
            return Err(Error::param(format!(
                "{} labels for a model with {} label embeddings",
                labels.len(),
                cfg.num_labels
            )));
        }
        if image_side > 0 && image_side * image_side * 3 != cfg.input_dim {
            return Err(Error::shape(image_side * image_side * 3, cfg.input_dim));
        }
        model.quantize_f32();
        Ok(Self { schedule, labels, image_side, model })
    }

    pub fn model(&self) -> &DenoiserModel {
        &self.model
    }

    pub fn into_model(self) -> DenoiserModel {
        self.model
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = self.model.config();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&u32_of(self.schedule.steps, "steps")?.to_le_bytes());
        out.extend_from_slice(&self.schedule.beta_start.to_le_bytes());
        out.extend_from_slice(&self.schedule.beta_end.to_le_bytes());
        out.extend_from_slice(&u32_of(self.labels.len(), "label count")?.to_le_bytes());
        for l in &self.labels {
            out.extend_from_slice(&u32_of(l.len(), "label length")?.to_le_bytes());
            out.extend_from_slice(l.as_bytes());
        }
        out.extend_from_slice(&u32_of(cfg.input_dim, "input_dim")?.to_le_bytes());
        out.extend_from_slice(&u32_of(self.image_side, "image_side")?.to_le_bytes());
        out.extend_from_slice(&u32_of(cfg.embed_dim, "embed_dim")?.to_le_bytes());
        out.push(cfg.activation.code());
        out.extend_from_slice(&u32_of(cfg.hidden_dims.len(), "layer count")?.to_le_bytes());
        for h in &cfg.hidden_dims {
            out.extend_from_slice(&u32_of(*h, "hidden width")?.to_le_bytes());
        }
        let params = self.model.params();
        let count: usize = params.iter().map(|p| p.len()).sum();
        out.extend_from_slice(&(count as u64).to_le_bytes());
        for v in params.into_iter().flatten() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a checkpoint (missing MDF1 magic)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Format("checkpoint CRC mismatch".into()));
        }
        let mut r = Reader { buf: &body[4..] };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let schedule = ScheduleParams { steps: r.u32()? as usize, beta_start: r.f64()?, beta_end: r.f64()? };
        let n_labels = r.u32()? as usize;
        let mut labels = Vec::with_capacity(n_labels.min(1024));
        for _ in 0..n_labels {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            labels.push(
                String::from_utf8(raw.to_vec()).map_err(|_| Error::Format("label is not UTF-8".into()))?,
            );
        }
        let input_dim = r.u32()? as usize;
        let image_side = r.u32()? as usize;
        let embed_dim = r.u32()? as usize;
        let code = r.take(1)?[0];
        let activation =
            Activation::from_code(code).ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
        let n_hidden = r.u32()? as usize;
        let mut hidden_dims = Vec::with_capacity(n_hidden.min(1024));
        for _ in 0..n_hidden {
            hidden_dims.push(r.u32()? as usize);
        }
        let config = DenoiserConfig { input_dim, hidden_dims, embed_dim, num_labels: n_labels, activation };
        let mut model = DenoiserModel::zeros(config).map_err(|e| Error::Format(format!("bad model header: {e}")))?;
        let count = r.u64()? as usize;
        if count != model.num_params() {
            return Err(Error::Format(format!(
                "checkpoint holds {count} parameters, header implies {}",
                model.num_params()
            )));
        }
        for tensor in model.params_mut() {
            for v in tensor.iter_mut() {
                *v = f32::from_le_bytes(r.take(4)?.try_into().unwrap()) as f64;
            }
        }
        if !r.buf.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes before CRC", r.buf.len())));
        }
        Self::new(schedule, labels, image_side, model).map_err(|e| Error::Format(format!("inconsistent checkpoint: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
