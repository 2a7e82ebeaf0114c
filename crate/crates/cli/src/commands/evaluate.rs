use std::path::{Path, PathBuf};

use anyhow::Context;
use mdf_core::image::RgbImage;
use mdf_core::metrics::{
    extract_features, fid, fisher_exact_two_sided, gaussian_stats, improved_precision, improved_recall,
    inception_score, load_f32_matrix, save_f32_matrix, sfid, zscore_pair, Contingency2x2, Extractor, FeatureSet,
    ProbTable, FINAL_SPACE, SPATIAL_SPACE,
};
use mdf_core::patchkit::read_manifest;
use serde::Serialize;

use super::emit_json;
use crate::args::{EmbedArgs, EvaluateArgs, ExtractorArg, SurveyArgs};
use crate::exit::usage;

fn load_embedding(path: &Path, space: &str) -> anyhow::Result<FeatureSet> {
    if !path.exists() {
        return Err(usage(format!("embedding file {} does not exist", path.display())));
    }
    let m = load_f32_matrix(path).map_err(|e| usage(format!("bad embedding file {}: {e}", path.display())))?;
    FeatureSet::new(m, space).map_err(|e| usage(format!("bad embedding file {}: {e}", path.display())))
}

fn image_paths(input: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "ppm"));
        paths.sort();
        return Ok(paths);
    }
    let entries = read_manifest(input).with_context(|| format!("reading manifest {}", input.display()))?;
    let base = input.parent().unwrap_or(Path::new("."));
    Ok(entries.iter().map(|e| base.join(&e.path)).collect())
}

#[derive(Serialize)]
struct EmbedSummary {
    out: String,
    rows: usize,
    cols: usize,
}

pub fn embed(args: EmbedArgs) -> anyhow::Result<()> {
    let paths = image_paths(&args.images)?;
    if paths.is_empty() {
        return Err(usage(format!("no PPM images found in {}", args.images.display())));
    }
    let images = paths
        .iter()
        .map(|p| RgbImage::load_ppm(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let extractor = match args.extractor {
        ExtractorArg::Identity => Extractor::Identity,
        ExtractorArg::Histogram => Extractor::Histogram,
        ExtractorArg::Projection => Extractor::RandomProjection { seed: args.seed, dim: args.dim },
    };
    let f = extract_features(&images, extractor, FINAL_SPACE)?;
    save_f32_matrix(f.data(), &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    emit_json(&EmbedSummary { out: args.out.display().to_string(), rows: f.rows(), cols: f.cols() }, None)
}

#[derive(Serialize)]
struct Report {
    is: Option<f64>,
    fid: f64,
    sfid: Option<f64>,
    precision: f64,
    recall: f64,
    k: usize,
    n_real: usize,
    n_gen: usize,
}

pub fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let real = load_embedding(&args.real, FINAL_SPACE)?;
    let gen = load_embedding(&args.gen, FINAL_SPACE)?;
    if real.cols() != gen.cols() {
        return Err(usage(format!("real embeddings have {} columns, generated {}", real.cols(), gen.cols())));
    }
    let fid_value = fid(&gaussian_stats(&real)?, &gaussian_stats(&gen)?)?;
    let sfid_value = match (&args.real_spatial, &args.gen_spatial) {
        (Some(r), Some(g)) => Some(sfid(&load_embedding(r, SPATIAL_SPACE)?, &load_embedding(g, SPATIAL_SPACE)?)?),
        _ => None,
    };
    let is_value = match &args.probs {
        Some(p) => {
            let m = load_f32_matrix(p).map_err(|e| usage(format!("bad embedding file {}: {e}", p.display())))?;
            // Stored as f32, so rows are renormalized before validation.
            let m = renormalize_rows(m);
            Some(inception_score(&ProbTable::new(m)?))
        }
        None => None,
    };
    let (pr_real, pr_gen) = if args.zscore { zscore_pair(&real, &gen)? } else { (real.clone(), gen.clone()) };
    let report = Report {
        is: is_value,
        fid: fid_value,
        sfid: sfid_value,
        precision: improved_precision(&pr_real, &pr_gen, args.k)?,
        recall: improved_recall(&pr_real, &pr_gen, args.k)?,
        k: args.k,
        n_real: real.rows(),
        n_gen: gen.rows(),
    };
    emit_json(&report, args.out.as_deref())
}

fn renormalize_rows(mut m: nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        if s > 0.0 && (s - 1.0).abs() < 1e-5 {
            row /= s;
        }
    }
    m
}

#[derive(Serialize)]
struct SurveyReport {
    table: [[u64; 2]; 2],
    p_value: f64,
}

pub fn survey(args: SurveyArgs) -> anyhow::Result<()> {
    let t: Contingency2x2 = args.table.parse().map_err(|e| usage(format!("{e}")))?;
    let p = fisher_exact_two_sided(&t);
    emit_json(&SurveyReport { table: [[t.a, t.b], [t.c, t.d]], p_value: p }, None)
}
