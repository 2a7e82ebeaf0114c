//! Seeded fixtures shared by the benchmarks.

use mdf_core::denoiser::{DenoiserConfig, DenoiserModel};
use mdf_core::image::RgbImage;
use mdf_core::metrics::FeatureSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `n × d` standard normal features.
pub fn gaussian_features(n: usize, d: usize, seed: u64) -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
    FeatureSet::from_rows(&rows, "final").expect("finite rows")
}

/// The default two-label network on 2-D inputs.
pub fn toy_model(seed: u64) -> DenoiserModel {
    DenoiserModel::new(DenoiserConfig::default(), seed).expect("default config is valid")
}

/// A tissue-like image with two stain hues and a white border.
pub fn stained_image(side: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::from_fn(side, side, |x, y| {
        if x < 2 || y < 2 {
            return [255, 255, 255];
        }
        let jitter: u8 = rng.gen_range(0..20);
        if (x / 8 + y / 8) % 2 == 0 {
            [90 + jitter, 60 + jitter, 150 + jitter]
        } else {
            [220 - jitter, 120 + jitter, 170]
        }
    })
}
