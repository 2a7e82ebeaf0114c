use anyhow::Context;
use mdf_core::checkpoint::Checkpoint;
use mdf_core::diffusion::{sample_with, SamplerOptions};
use mdf_core::image::RgbImage;
use mdf_core::metrics::save_f32_matrix;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::emit_json;
use crate::args::{SampleArgs, SampleFormat};
use crate::exit::usage;

/// Maps `[-1, 1]` back to 8-bit channels, rounding and clamping.
fn vector_to_image(v: &[f64], side: usize) -> anyhow::Result<RgbImage> {
    let bytes = v.iter().map(|x| ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8).collect();
    Ok(RgbImage::new(side, side, bytes)?)
}

#[derive(Serialize)]
struct Summary {
    label: String,
    count: usize,
    files: Vec<String>,
}

pub fn run(args: SampleArgs) -> anyhow::Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let label = ck.label_index(&args.label).ok_or_else(|| {
        usage(format!("unknown label {:?}; valid labels: {}", args.label, ck.labels.join(", ")))
    })?;
    if args.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let format = match args.format {
        SampleFormat::Auto if ck.image_side > 0 => SampleFormat::Ppm,
        SampleFormat::Auto => SampleFormat::F32,
        SampleFormat::Ppm if ck.image_side == 0 => {
            return Err(usage("this checkpoint models vectors; use --format f32"));
        }
        f => f,
    };
    let schedule = ck.schedule.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let opts = SamplerOptions { final_step_noise: args.final_step_noise };
    let xs = sample_with(ck.model(), &schedule, label, args.count, &mut rng, opts)?;

    let mut files = Vec::new();
    match format {
        SampleFormat::F32 => {
            let dim = xs.first().map_or(0, Vec::len);
            let m = DMatrix::from_fn(xs.len(), dim, |i, j| xs[i][j]);
            save_f32_matrix(&m, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
            files.push(args.out.display().to_string());
        }
        _ => {
            std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
            for (i, x) in xs.iter().enumerate() {
                let path = args.out.join(format!("{}_{i:05}.ppm", args.label));
                vector_to_image(x, ck.image_side)?.save_ppm(&path)?;
                files.push(path.display().to_string());
            }
        }
    }
    emit_json(&Summary { label: args.label, count: xs.len(), files }, None)
}
