//! Small synthetic image sets for training tests.

use augsens::dataset::{Image, PIXELS, SIDE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ten classes, each a bright horizontal band at a class-specific height,
/// over low-level noise.
pub fn banded(n: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = (i % 10) as u8;
            let mut px = [0u8; PIXELS];
            for (j, p) in px.iter_mut().enumerate() {
                let row = j / SIDE;
                let band = 2 + 2 * label as usize;
                *p = if row >= band && row < band + 3 {
                    rng.random_range(150..=255)
                } else if rng.random_bool(0.2) {
                    rng.random_range(0..60)
                } else {
                    0
                };
            }
            Image::new(px, label)
        })
        .collect()
}

/// Arbitrary pixels, arbitrary labels.
pub fn noise(n: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut px = [0u8; PIXELS];
            rng.fill(&mut px[..]);
            Image::new(px, rng.random_range(0..10))
        })
        .collect()
}
