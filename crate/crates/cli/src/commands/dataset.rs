use std::collections::BTreeMap;

use anyhow::Context;
use mdf_core::image::RgbImage;
use mdf_core::patchkit::{
    extract_patches, label_counts, load_annotations, patch_file_name, write_manifest, Annotation, ManifestEntry,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{emit_json, load_config};
use crate::args::MakeDatasetArgs;
use crate::exit::usage;

#[derive(Serialize)]
struct Summary {
    manifest: String,
    total: usize,
    counts: BTreeMap<String, usize>,
}

/// Merges annotations per slide; one slide carries exactly one label.
fn group_by_slide(annotations: Vec<Annotation>) -> anyhow::Result<BTreeMap<String, Annotation>> {
    let mut slides: BTreeMap<String, Annotation> = BTreeMap::new();
    for ann in annotations {
        match slides.get_mut(&ann.slide_id) {
            Some(existing) if existing.label != ann.label => {
                return Err(usage(format!(
                    "slide {} is annotated with both {} and {}",
                    ann.slide_id, existing.label, ann.label
                )));
            }
            Some(existing) => existing.polygons.extend(ann.polygons),
            None => {
                slides.insert(ann.slide_id.clone(), ann);
            }
        }
    }
    Ok(slides)
}

pub fn run(args: MakeDatasetArgs) -> anyhow::Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let spec = cfg.data.tile_spec()?;
    if !args.slides.is_dir() {
        return Err(usage(format!("slides directory {} does not exist", args.slides.display())));
    }
    let annotations = load_annotations(&args.annotations)
        .with_context(|| format!("reading annotations {}", args.annotations.display()))?;
    let slides = group_by_slide(annotations)?;
    for ann in slides.values() {
        if cfg.data.label_index(&ann.label).is_none() {
            return Err(usage(format!(
                "slide {} has label {:?}; configured labels are {}",
                ann.slide_id,
                ann.label,
                cfg.data.labels.join(", ")
            )));
        }
        if ann.slide_id.is_empty() || ann.slide_id.contains(['/', '\\']) {
            return Err(usage(format!("slide id {:?} cannot name a file", ann.slide_id)));
        }
    }

    let patch_dir = args.out.join("patches");
    std::fs::create_dir_all(&patch_dir).with_context(|| format!("creating {}", patch_dir.display()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut entries = Vec::new();
    for (slide_id, ann) in &slides {
        let path = args.slides.join(format!("{slide_id}.ppm"));
        let slide = RgbImage::load_ppm(&path).with_context(|| format!("reading slide {}", path.display()))?;
        let patches = extract_patches(&slide, ann, &spec, &mut rng).with_context(|| format!("tiling {slide_id}"))?;
        log::info!("{slide_id}: {} patches", patches.len());
        for p in patches {
            let name = patch_file_name(slide_id, p.x, p.y);
            p.image.save_ppm(patch_dir.join(&name))?;
            entries.push(ManifestEntry {
                path: format!("patches/{name}"),
                label: p.label,
                slide_id: slide_id.clone(),
                x: p.x,
                y: p.y,
            });
        }
    }
    let manifest = args.out.join("manifest.jsonl");
    write_manifest(&entries, &manifest)?;

    let counts = label_counts(&entries);
    eprintln!("{:<12} {:>8}", "Subtype", "Patches");
    for label in &cfg.data.labels {
        eprintln!("{:<12} {:>8}", label, counts.get(label).copied().unwrap_or(0));
    }
    eprintln!("{:<12} {:>8}", "Total", entries.len());
    emit_json(
        &Summary { manifest: manifest.display().to_string(), total: entries.len(), counts },
        None,
    )
}
