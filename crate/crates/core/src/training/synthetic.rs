//! Procedural reflectance patch pairs for smoke tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::{bicubic_resize, Plane};
use crate::retinex::bound_reflectance;

use super::patches::{to_bounded_f32, PatchPair, PatchStore, HR_PATCH, LR_PATCH};

/// A smooth random reflectance field of `n x n` samples: a sum of three
/// plane waves with amplitudes in `[0.1, 0.4]` and at most `max_freq`
/// radians per sample.
pub fn synthetic_reflectance(n: usize, max_freq: f64, rng: &mut impl Rng) -> Plane {
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.1..0.4),
                rng.random_range(-max_freq..max_freq),
                rng.random_range(-max_freq..max_freq),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    Plane::from_fn(n, n, |y, x| {
        waves
            .iter()
            .map(|&(a, fy, fx, phase)| a * (fy * y as f64 + fx * x as f64 + phase).sin())
            .sum()
    })
}

/// One synthetic pair: the HR patch is a bounded random field, the LR patch
/// is its bicubic half-size version.
pub fn synthetic_pair(rng: &mut impl Rng, source_id: u32) -> Result<PatchPair> {
    let hr = synthetic_reflectance(HR_PATCH, 0.5, rng);
    let lr = bicubic_resize(&hr, LR_PATCH as f64 / HR_PATCH as f64)?;
    Ok(PatchPair {
        r_ll: to_bounded_f32(&bound_reflectance(&lr)),
        r_hh: to_bounded_f32(&bound_reflectance(&hr)),
        source_id,
        aug_id: 0,
    })
}

/// `count` synthetic pairs from a seeded generator.
pub fn synthetic_patch_store(count: usize, seed: u64) -> Result<PatchStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = PatchStore::new(LR_PATCH, HR_PATCH)?;
    let id = store.add_source("synthetic");
    for _ in 0..count {
        store.push(synthetic_pair(&mut rng, id)?)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = synthetic_patch_store(3, 9).unwrap();
        assert_eq!(a, synthetic_patch_store(3, 9).unwrap());
        assert_ne!(a, synthetic_patch_store(3, 10).unwrap());
        for p in a.pairs() {
            assert_eq!((p.r_ll.len(), p.r_hh.len()), (LR_PATCH * LR_PATCH, HR_PATCH * HR_PATCH));
            assert!(p.r_hh.iter().chain(&p.r_ll).all(|v| v.abs() < 1.0));
        }
    }
}
