//! Deterministic feature extractors standing in for a pretrained network.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::FeatureSet;
use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Histogram bins per channel.
pub const HIST_BINS: usize = 16;
/// Width of a histogram feature row: 3 channel histograms plus gradient.
pub const HIST_DIM: usize = 3 * HIST_BINS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extractor {
    /// Flattened interleaved RGB scaled to `[0, 1]`.
    Identity,
    /// Identity features times a seeded `D × dim` Gaussian matrix, scaled by `1/√D`.
    RandomProjection { seed: u64, dim: usize },
    /// Normalized per-channel histograms plus mean gradient magnitude.
    Histogram,
}

fn identity_row(img: &RgbImage) -> Vec<f64> {
    img.as_bytes().iter().map(|v| *v as f64 / 255.0).collect()
}

/// The `input_dim × dim` matrix used by [`Extractor::RandomProjection`].
pub fn projection_matrix(seed: u64, input_dim: usize, dim: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (input_dim as f64).sqrt();
    // Filled row by row so the matrix does not depend on storage order.
    let mut m = DMatrix::zeros(input_dim, dim);
    for i in 0..input_dim {
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            m[(i, j)] = z * scale;
        }
    }
    m
}

fn histogram_row(img: &RgbImage) -> Vec<f64> {
    let mut row = vec![0.0; HIST_DIM];
    let n = img.pixel_count() as f64;
    for px in img.as_bytes().chunks_exact(3) {
        for c in 0..3 {
            row[c * HIST_BINS + px[c] as usize * HIST_BINS / 256] += 1.0 / n;
        }
    }
    // Forward differences of the channel mean, in units of full scale.
    let gray = |x: usize, y: usize| {
        let p = img.pixel(x, y);
        (p[0] as f64 + p[1] as f64 + p[2] as f64) / (3.0 * 255.0)
    };
    let (w, h) = (img.width(), img.height());
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let g = gray(x, y);
            let gx = if x + 1 < w { gray(x + 1, y) - g } else { 0.0 };
            let gy = if y + 1 < h { gray(x, y + 1) - g } else { 0.0 };
            total += (gx * gx + gy * gy).sqrt();
        }
    }
    row[HIST_DIM - 1] = total / n;
    row
}

/// One feature row per image. Identity and projection need equal image sizes.
pub fn extract_features(images: &[RgbImage], extractor: Extractor, space: &str) -> Result<FeatureSet> {
    let first = images.first().ok_or_else(|| Error::param("no images to embed"))?;
    if images.iter().any(|im| im.pixel_count() == 0) {
        return Err(Error::param("cannot embed an empty image"));
    }
    let same_size = |im: &&RgbImage| im.width() == first.width() && im.height() == first.height();
    if extractor != Extractor::Histogram && !images.iter().all(|im| same_size(&im)) {
        return Err(Error::param("images must share one size for this extractor"));
    }
    let rows: Vec<Vec<f64>> = match extractor {
        Extractor::Identity => images.iter().map(identity_row).collect(),
        Extractor::Histogram => images.iter().map(histogram_row).collect(),
        Extractor::RandomProjection { seed, dim } => {
            if dim == 0 {
                return Err(Error::param("projection width must be at least 1"));
            }
            let input_dim = first.as_bytes().len();
            let proj = projection_matrix(seed, input_dim, dim);
            let x = DMatrix::from_fn(images.len(), input_dim, |i, j| images[i].as_bytes()[j] as f64 / 255.0);
            let y = x * proj;
            return FeatureSet::new(y, space);
        }
    };
    FeatureSet::from_rows(&rows, space)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(v: u8) -> RgbImage {
        RgbImage::filled(2, 2, [v, v, v])
    }

    #[test]
    fn identity_flattens_and_scales() {
        let f = extract_features(&[gray(255), gray(51)], Extractor::Identity, "final").unwrap();
        assert_eq!(f.cols(), 12);
        assert!(f.data().row(0).iter().all(|v| *v == 1.0));
        assert!(f.data().row(1).iter().all(|v| (*v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn projection_is_seeded() {
        let imgs = [gray(10), gray(200)];
        let e = Extractor::RandomProjection { seed: 5, dim: 4 };
        let a = extract_features(&imgs, e, "final").unwrap();
        assert_eq!(a, extract_features(&imgs, e, "final").unwrap());
        let b = extract_features(&imgs, Extractor::RandomProjection { seed: 6, dim: 4 }, "final").unwrap();
        assert_ne!(a, b);
        assert_eq!(a.cols(), 4);
    }

    #[test]
    fn histogram_mass_and_gradient() {
        let img = RgbImage::from_fn(4, 4, |x, y| [(x * 60) as u8, (y * 70) as u8, 128]);
        let f = extract_features(&[img, gray(0)], Extractor::Histogram, "final").unwrap();
        assert_eq!(f.cols(), HIST_DIM);
        for row in f.data().row_iter() {
            let mass: f64 = row.iter().take(3 * HIST_BINS).sum();
            assert!((mass - 3.0).abs() < 1e-9);
        }
        assert!(f.data()[(0, HIST_DIM - 1)] > 0.0);
        assert_eq!(f.data()[(1, HIST_DIM - 1)], 0.0);
        assert_eq!(f.data()[(1, 0)], 1.0);
    }

    #[test]
    fn empty_and_mixed_inputs() {
        assert!(extract_features(&[], Extractor::Identity, "final").is_err());
        let mixed = [gray(1), RgbImage::filled(3, 3, [0, 0, 0])];
        assert!(extract_features(&mixed, Extractor::Identity, "final").is_err());
        assert!(extract_features(&mixed, Extractor::Histogram, "final").is_ok());
    }
}
