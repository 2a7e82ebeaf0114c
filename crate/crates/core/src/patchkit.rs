//! Annotation-driven patch extraction and the JSON-lines dataset manifest.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Genotype labels used when no other set is configured.
pub const DEFAULT_LABELS: [&str; 3] = ["IDHC", "IDHNC", "IDHWT"];

pub type Point = [f64; 2];

/// Labeled polygon regions on one slide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub slide_id: String,
    pub label: String,
    pub polygons: Vec<Vec<Point>>,
}

impl Annotation {
    /// Checks vertex counts and that every vertex lies within the slide.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        for (i, poly) in self.polygons.iter().enumerate() {
            if poly.len() < 3 {
                return Err(Error::param(format!(
                    "slide {}: polygon {i} has {} vertices, need 3",
                    self.slide_id,
                    poly.len()
                )));
            }
            for &[x, y] in poly {
                if !(x >= 0.0 && x <= width as f64 && y >= 0.0 && y <= height as f64) {
                    return Err(Error::Validation(format!(
                        "slide {}: vertex ({x}, {y}) outside {width}x{height}",
                        self.slide_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reads annotations from JSON holding either one object or an array of them.
pub fn read_annotations<R: Read>(r: R) -> Result<Vec<Annotation>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Annotation),
        Many(Vec<Annotation>),
    }
    Ok(match serde_json::from_reader(r)? {
        OneOrMany::One(a) => vec![a],
        OneOrMany::Many(v) => v,
    })
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>> {
    read_annotations(BufReader::new(std::fs::File::open(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileSpec {
    pub patch_size: usize,
    pub stride: usize,
    pub resize_to: usize,
    pub max_per_slide: usize,
    pub coverage_threshold: f64,
}

impl Default for TileSpec {
    fn default() -> Self {
        Self { patch_size: 512, stride: 512, resize_to: 128, max_per_slide: 100, coverage_threshold: 1.0 }
    }
}

impl TileSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resize_to == 0 || self.patch_size < self.resize_to {
            return Err(Error::param(format!(
                "need patch_size >= resize_to >= 1, got {} and {}",
                self.patch_size, self.resize_to
            )));
        }
        if self.patch_size % self.resize_to != 0 {
            return Err(Error::param(format!(
                "patch_size {} is not divisible by resize_to {}",
                self.patch_size, self.resize_to
            )));
        }
        if self.stride == 0 {
            return Err(Error::param("stride must be at least 1"));
        }
        if self.max_per_slide == 0 {
            return Err(Error::param("max_per_slide must be at least 1"));
        }
        if !(self.coverage_threshold > 0.0 && self.coverage_threshold <= 1.0) {
            return Err(Error::param(format!(
                "coverage_threshold must be in (0, 1], got {}",
                self.coverage_threshold
            )));
        }
        Ok(())
    }
}

/// Pixel provider for slides too large, or too synthetic, to hold in memory.
pub trait SlideSource {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    /// The in-bounds `w × h` window at `(x, y)`.
    fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<RgbImage>;
}

impl SlideSource for RgbImage {
    fn width(&self) -> usize {
        RgbImage::width(self)
    }

    fn height(&self) -> usize {
        RgbImage::height(self)
    }

    fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<RgbImage> {
        RgbImage::crop(self, x, y, w, h)
    }
}

fn edge_x(a: Point, b: Point, y: f64) -> f64 {
    a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
}

fn edges(poly: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    poly.iter().zip(poly.iter().cycle().skip(1)).map(|(a, b)| (*a, *b))
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let scale = (b[0] - a[0]).abs() + (b[1] - a[1]).abs();
    cross.abs() <= 1e-12 * scale.max(1.0)
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Even-odd membership with boundary points counted as inside.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> Result<bool> {
    if poly.len() < 3 {
        return Err(Error::param(format!("polygon needs 3 vertices, got {}", poly.len())));
    }
    let mut inside = false;
    for (a, b) in edges(poly) {
        if on_segment(p, a, b) {
            return Ok(true);
        }
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < edge_x(a, b, p[1]) {
            inside = !inside;
        }
    }
    Ok(inside)
}

/// Closed x-intervals of the polygon union on the horizontal line at `y`.
fn scanline_intervals(polygons: &[Vec<Point>], y: f64) -> Vec<(f64, f64)> {
    let mut spans = Vec::new();
    let mut crossings = Vec::new();
    for poly in polygons {
        crossings.clear();
        for (a, b) in edges(poly) {
            if (a[1] > y) != (b[1] > y) {
                crossings.push(edge_x(a, b, y));
            }
            // Boundary points on this line count as inside.
            if a[1] == y && b[1] == y {
                spans.push((a[0].min(b[0]), a[0].max(b[0])));
            } else if a[1] == y {
                spans.push((a[0], a[0]));
            }
        }
        crossings.sort_by(f64::total_cmp);
        spans.extend(crossings.chunks_exact(2).map(|c| (c[0], c[1])));
    }
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (lo, hi) in spans {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

/// Per-row prefix counts of pixel centers inside the polygon union.
struct Coverage {
    width: usize,
    /// Row `y` occupies `prefix[y * (width + 1)..][..width + 1]`.
    prefix: Vec<u32>,
}

impl Coverage {
    fn new(polygons: &[Vec<Point>], width: usize, height: usize) -> Self {
        let stride = width + 1;
        let mut prefix = vec![0u32; stride * height];
        for y in 0..height {
            let row = &mut prefix[y * stride..(y + 1) * stride];
            let mut marks = vec![false; width];
            for (lo, hi) in scanline_intervals(polygons, y as f64 + 0.5) {
                // Pixel x is inside when lo <= x + 0.5 <= hi.
                let first = (lo - 0.5).ceil().max(0.0);
                let last = (hi - 0.5).floor().min(width as f64 - 1.0);
                if first <= last {
                    marks[first as usize..=last as usize].fill(true);
                }
            }
            for x in 0..width {
                row[x + 1] = row[x] + marks[x] as u32;
            }
        }
        Self { width, prefix }
    }

    fn count(&self, x: usize, y: usize, size: usize) -> u64 {
        let stride = self.width + 1;
        (y..y + size)
            .map(|r| (self.prefix[r * stride + x + size] - self.prefix[r * stride + x]) as u64)
            .sum()
    }
}

/// Pixels of the `size × size` window at `(x, y)` whose centers fall inside
/// any polygon. Computed independently per call; for bulk use see
/// [`candidate_positions`].
pub fn window_coverage(polygons: &[Vec<Point>], x: usize, y: usize, size: usize) -> u64 {
    let mut total = 0;
    for row in y..y + size {
        for (lo, hi) in scanline_intervals(polygons, row as f64 + 0.5) {
            let first = (lo - 0.5).ceil().max(x as f64);
            let last = (hi - 0.5).floor().min((x + size) as f64 - 1.0);
            if first <= last {
                total += (last - first) as u64 + 1;
            }
        }
    }
    total
}

/// Grid origins whose windows meet the coverage threshold, in `(y, x)` order.
pub fn candidate_positions(
    width: usize,
    height: usize,
    polygons: &[Vec<Point>],
    spec: &TileSpec,
) -> Result<Vec<(usize, usize)>> {
    spec.validate()?;
    if width < spec.patch_size || height < spec.patch_size {
        return Err(Error::param(format!(
            "slide {width}x{height} is smaller than patch size {}",
            spec.patch_size
        )));
    }
    for poly in polygons {
        if poly.len() < 3 {
            return Err(Error::param(format!("polygon needs 3 vertices, got {}", poly.len())));
        }
    }
    let coverage = Coverage::new(polygons, width, height);
    let area = (spec.patch_size * spec.patch_size) as f64;
    let mut out = Vec::new();
    for y in (0..=height - spec.patch_size).step_by(spec.stride) {
        for x in (0..=width - spec.patch_size).step_by(spec.stride) {
            let inside = coverage.count(x, y, spec.patch_size) as f64;
            if inside >= spec.coverage_threshold * area {
                out.push((x, y));
            }
        }
    }
    Ok(out)
}

/// Exact block mean with integer rounding half-up.
pub fn downsample(img: &RgbImage, factor: usize) -> Result<RgbImage> {
    if factor == 0 || img.width() % factor != 0 || img.height() % factor != 0 {
        return Err(Error::param(format!(
            "{}x{} image is not divisible by factor {factor}",
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width() / factor, img.height() / factor);
    let n = (factor * factor) as u64;
    let src = img.as_bytes();
    let mut data = Vec::with_capacity(w * h * 3);
    for by in 0..h {
        for bx in 0..w {
            let mut sums = [0u64; 3];
            for y in by * factor..(by + 1) * factor {
                let row = &src[3 * (y * img.width() + bx * factor)..3 * (y * img.width() + (bx + 1) * factor)];
                for px in row.chunks_exact(3) {
                    for c in 0..3 {
                        sums[c] += px[c] as u64;
                    }
                }
            }
            data.extend(sums.iter().map(|s| ((s + n / 2) / n) as u8));
        }
    }
    RgbImage::new(w, h, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub image: RgbImage,
    pub label: String,
    pub x: usize,
    pub y: usize,
}

/// Tiles the annotated regions of `slide` into downsampled patches.
///
/// Patches come back ordered by `(y, x)`. When more than
/// `spec.max_per_slide` windows qualify, a uniform subset is drawn from `rng`.
pub fn extract_patches<S, R>(slide: &S, ann: &Annotation, spec: &TileSpec, rng: &mut R) -> Result<Vec<Patch>>
where
    S: SlideSource + ?Sized,
    R: Rng + ?Sized,
{
    spec.validate()?;
    ann.validate(slide.width(), slide.height())?;
    let mut positions = candidate_positions(slide.width(), slide.height(), &ann.polygons, spec)?;
    if positions.len() > spec.max_per_slide {
        let mut keep = rand::seq::index::sample(rng, positions.len(), spec.max_per_slide).into_vec();
        keep.sort_unstable();
        positions = keep.into_iter().map(|i| positions[i]).collect();
    }
    let factor = spec.patch_size / spec.resize_to;
    positions
        .into_iter()
        .map(|(x, y)| {
            let crop = slide.crop(x, y, spec.patch_size, spec.patch_size)?;
            Ok(Patch { image: downsample(&crop, factor)?, label: ann.label.clone(), x, y })
        })
        .collect()
}

/// File name used for a patch inside the output directory.
pub fn patch_file_name(slide_id: &str, x: usize, y: usize) -> String {
    format!("{slide_id}_{x}_{y}.ppm")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub label: String,
    pub slide_id: String,
    pub x: usize,
    pub y: usize,
}

/// Writes one JSON object per line, ordered by `(slide_id, y, x)`.
pub fn write_manifest_to<W: Write>(entries: &[ManifestEntry], mut w: W) -> Result<()> {
    let mut sorted: Vec<&ManifestEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| (&a.slide_id, a.y, a.x).cmp(&(&b.slide_id, b.y, b.x)));
    for e in sorted {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_manifest_to(entries, std::io::BufWriter::new(file))
}

/// Reads a manifest, skipping blank lines.
pub fn read_manifest_from<R: Read>(r: R) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("manifest line {}: {e}", i + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    read_manifest_from(std::fs::File::open(path)?)
}

pub fn label_counts(entries: &[ManifestEntry]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for e in entries {
        *counts.entry(e.label.clone()).or_insert(0) += 1;
    }
    counts
}
