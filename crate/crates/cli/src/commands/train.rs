use std::io::Write;
use std::path::Path;

use anyhow::Context;
use mdf_core::checkpoint::{Checkpoint, ScheduleParams};
use mdf_core::denoiser::DenoiserModel;
use mdf_core::diffusion::{Sample, Weighting};
use mdf_core::image::RgbImage;
use mdf_core::patchkit::read_manifest;
use mdf_core::train::{train, DataSource, TrainOptions, TwoGaussians, VectorDataset};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{emit_json, load_config};
use crate::args::{ToyTask, TrainArgs, WeightingArg};
use crate::exit::usage;

/// Maps 8-bit channels to `[-1, 1]`.
pub fn image_to_vector(img: &RgbImage) -> Vec<f64> {
    img.as_bytes().iter().map(|v| *v as f64 / 127.5 - 1.0).collect()
}

struct Dataset {
    source: Box<dyn DataSource>,
    labels: Vec<String>,
    image_side: usize,
}

fn toy_dataset(task: ToyTask) -> Dataset {
    match task {
        ToyTask::TwoGaussians => Dataset {
            source: Box::new(TwoGaussians::default()),
            labels: vec!["0".into(), "1".into()],
            image_side: 0,
        },
    }
}

fn manifest_dataset(path: &Path, labels: &[String]) -> anyhow::Result<Dataset> {
    let entries = read_manifest(path).with_context(|| format!("reading manifest {}", path.display()))?;
    if entries.is_empty() {
        return Err(usage(format!("manifest {} lists no patches", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::with_capacity(entries.len());
    let mut side = None;
    for e in &entries {
        let label = labels.iter().position(|l| *l == e.label).ok_or_else(|| {
            usage(format!("patch {} has label {:?}; configured labels are {}", e.path, e.label, labels.join(", ")))
        })?;
        let img = RgbImage::load_ppm(base.join(&e.path)).with_context(|| format!("reading patch {}", e.path))?;
        if img.width() != img.height() || side.is_some_and(|s| s != img.width()) {
            return Err(usage(format!("patch {} is {}x{}; patches must share one square size", e.path, img.width(), img.height())));
        }
        side = Some(img.width());
        samples.push(Sample { data: image_to_vector(&img), label });
    }
    Ok(Dataset {
        source: Box::new(VectorDataset::new(samples, labels.len())?),
        labels: labels.to_vec(),
        image_side: side.unwrap_or(0),
    })
}

#[derive(Serialize)]
struct Summary {
    checkpoint: String,
    steps: usize,
    weighting: &'static str,
    final_loss: Option<f64>,
}

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(v) = args.steps {
        cfg.train.steps = v;
    }
    if let Some(v) = args.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = args.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = args.batch {
        cfg.train.batch = v;
    }
    if let Some(v) = args.log_every {
        cfg.train.log_every = v;
    }
    if let Some(w) = args.weighting {
        cfg.loss.weighting = match w {
            WeightingArg::Simple => Weighting::Simple,
            WeightingArg::P2 => Weighting::P2,
        };
    }
    cfg.validate().map_err(|e| usage(format!("invalid settings: {e}")))?;

    let data = match (args.toy, &args.manifest) {
        (Some(task), _) => toy_dataset(task),
        (None, Some(path)) => manifest_dataset(path, &cfg.data.labels)?,
        (None, None) => unreachable!("clap requires a data source"),
    };
    let schedule = cfg.schedule.build()?;
    let loss = cfg.loss.build()?;
    let model_cfg = cfg.model.build(data.source.dim(), data.labels.len())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut model = DenoiserModel::new(model_cfg, rng.next_u64())?;
    let opts = TrainOptions { steps: cfg.train.steps, batch: cfg.train.batch, lr: cfg.train.lr };
    let log_every = cfg.train.log_every;
    let mut rows = Vec::new();
    let mut window = (0.0, 0usize);
    let history = train(&mut model, &schedule, &loss, data.source.as_ref(), &opts, &mut rng, |step, value| {
        window.0 += value;
        window.1 += 1;
        if step % log_every == 0 || step == opts.steps {
            let mean = window.0 / window.1 as f64;
            log::info!("step {step}: loss {mean:.6}");
            rows.push((step, mean));
            window = (0.0, 0);
        }
    })?;

    if let Some(path) = &args.loss_csv {
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        writeln!(f, "step,loss,weight_scheme")?;
        for (step, value) in &rows {
            writeln!(f, "{step},{value},{}", loss.weighting.name())?;
        }
        f.flush()?;
    }

    let sched = ScheduleParams {
        steps: cfg.schedule.steps,
        beta_start: cfg.schedule.beta_start,
        beta_end: cfg.schedule.beta_end,
    };
    let ck = Checkpoint::new(sched, data.labels, data.image_side, model)?;
    ck.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    emit_json(
        &Summary {
            checkpoint: args.out.display().to_string(),
            steps: history.len(),
            weighting: loss.weighting.name(),
            final_loss: rows.last().map(|r| r.1),
        },
        None,
    )
}
