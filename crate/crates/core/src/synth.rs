//! Deterministic synthetic datasets for tests, demos and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Image, LabeledDataset};

/// Side length of [`shapes`] images.
pub const SHAPE_SIZE: usize = 28;
/// Classes of [`shapes`]: horizontal bar, vertical bar, ring, filled square.
pub const SHAPE_CLASSES: usize = 4;

/// Two classes on `size × size` images: bright upper half (0) or bright
/// lower half (1), with uniform pixel noise.
pub fn separable(n: usize, size: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let img = Image::from_fn(size, size, 1, |r, _, _| {
            let upper = r < size / 2;
            let bright = upper == (label == 0);
            if bright {
                rng.random_range(0.6..1.0)
            } else {
                rng.random_range(0.0..0.3)
            }
        })
        .expect("positive size");
        images.push(img);
        labels.push(label);
    }
    LabeledDataset::new(images, labels, 2).expect("consistent dataset")
}

/// Four jittered shape classes on 28×28 black backgrounds.
pub fn shapes(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = SHAPE_SIZE as f64;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % SHAPE_CLASSES;
        let cy = s / 2.0 + rng.random_range(-3.0..3.0);
        let cx = s / 2.0 + rng.random_range(-3.0..3.0);
        let len = rng.random_range(7.0..10.0);
        let thick = rng.random_range(1.2..2.2);
        let ink = rng.random_range(0.7..1.0);
        let radius = rng.random_range(6.0..9.0);
        let half = rng.random_range(4.0..6.0);
        let noise: Vec<f64> = (0..SHAPE_SIZE * SHAPE_SIZE)
            .map(|_| rng.random_range(0.0..0.08))
            .collect();
        let img = Image::from_fn(SHAPE_SIZE, SHAPE_SIZE, 1, |r, c, _| {
            let (dy, dx) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
            let inside = match label {
                0 => dy.abs() <= thick && dx.abs() <= len,
                1 => dx.abs() <= thick && dy.abs() <= len,
                2 => (dy.hypot(dx) - radius).abs() <= thick,
                _ => dy.abs() <= half && dx.abs() <= half,
            };
            let v = noise[r * SHAPE_SIZE + c];
            if inside {
                ink - v
            } else {
                v
            }
        })
        .expect("fixed size");
        images.push(img);
        labels.push(label);
    }
    LabeledDataset::new(images, labels, SHAPE_CLASSES).expect("consistent dataset")
}
