use anyhow::Context;
use mdf_core::image::RgbImage;
use mdf_core::stainnorm::{normalize_to_target, FitOptions, StainModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::emit_json;
use crate::args::StainArgs;

#[derive(Serialize)]
struct Summary {
    out: String,
    source_w: [f64; 6],
    source_c99: [f64; 2],
    target_w: [f64; 6],
    target_c99: [f64; 2],
}

fn row_major(m: &StainModel) -> [f64; 6] {
    let w = &m.w;
    [w[(0, 0)], w[(0, 1)], w[(1, 0)], w[(1, 1)], w[(2, 0)], w[(2, 1)]]
}

pub fn run(args: StainArgs) -> anyhow::Result<()> {
    let opts = FitOptions { lambda: args.lambda, iters: args.iters };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let src = RgbImage::load_ppm(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let src_model = StainModel::fit(&src, opts, &mut rng).context("fitting source stains")?;
    let tgt_model = match (&args.target, &args.target_model) {
        (Some(path), _) => {
            let tgt = RgbImage::load_ppm(path).with_context(|| format!("reading {}", path.display()))?;
            StainModel::fit(&tgt, opts, &mut rng).context("fitting target stains")?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            StainModel::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, None) => unreachable!("clap requires a target"),
    };
    if let Some(path) = &args.save_target_model {
        std::fs::write(path, tgt_model.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    }
    let out = normalize_to_target(&src, &src_model, &tgt_model)?;
    out.save_ppm(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    emit_json(
        &Summary {
            out: args.out.display().to_string(),
            source_w: row_major(&src_model),
            source_c99: src_model.c99,
            target_w: row_major(&tgt_model),
            target_c99: tgt_model.c99,
        },
        None,
    )
}
