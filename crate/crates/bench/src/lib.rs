//! Deterministic inputs shared by the benchmarks.

use hdrsr_core::image::Plane;
use hdrsr_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth luminance field with a few sharp edges, values in `[0.02, 0.98]`.
pub fn synthetic_luminance(height: usize, width: usize) -> Plane {
    Plane::from_fn(height, width, |y, x| {
        let fy = y as f64 / height as f64;
        let fx = x as f64 / width as f64;
        let smooth = 0.5 + 0.3 * (6.0 * fx).sin() * (4.0 * fy).cos();
        let edge = if (x / 16 + y / 16) % 2 == 0 { 0.15 } else { -0.15 };
        (smooth + edge).clamp(0.02, 0.98)
    })
}

/// Uniform `[-1, 1)` tensor from a seeded generator.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("shape matches data")
}
