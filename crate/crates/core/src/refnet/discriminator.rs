use crate::error::{Error, Result};
use crate::tensor::{Network, NetworkBuilder, Tensor};

pub const DISCRIMINATOR_SLOPE: f32 = 0.2;
const LEVELS: usize = 4;

/// Four levels of `conv3x3 -> LeakyReLU -> stride-2 conv3x3 -> LeakyReLU`
/// with widths `base * {1, 2, 4, 8}`, then global average pooling and a
/// dense layer to one logit per sample.
pub fn build_discriminator(base_channels: usize, seed: u64) -> Result<Network> {
    if base_channels == 0 {
        return Err(Error::Config("discriminator base_channels must be positive".into()));
    }
    let mut b = NetworkBuilder::new(1, seed);
    for l in 0..LEVELS {
        let w = base_channels << l;
        b.conv3x3(&format!("d{l}.c"), w).leaky_relu(DISCRIMINATOR_SLOPE);
        b.conv3x3_stride2(&format!("d{l}.down"), w).leaky_relu(DISCRIMINATOR_SLOPE);
    }
    b.global_avg_pool();
    b.dense("logit", 1);
    b.build()
}

/// One logit per batch sample.
pub fn discriminator_logits(net: &Network, x: &Tensor) -> Result<Vec<f32>> {
    Ok(net.forward(x)?.into_data())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logit_per_sample() {
        let d = build_discriminator(2, 0).unwrap();
        let x = Tensor::filled(vec![3, 16, 16, 1], 0.1);
        let y = d.forward(&x).unwrap();
        assert_eq!(y.shape(), &[3, 1, 1, 1]);
    }

    #[test]
    fn batch_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = build_discriminator(2, 0).unwrap();
        let items: Vec<Tensor> = (0..3)
            .map(|_| {
                Tensor::nhwc(1, 16, 16, 1, (0..256).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .unwrap()
            })
            .collect();
        let fwd = discriminator_logits(&d, &Tensor::stack(&items).unwrap()).unwrap();
        let rev: Vec<Tensor> = items.iter().rev().cloned().collect();
        let bwd = discriminator_logits(&d, &Tensor::stack(&rev).unwrap()).unwrap();
        assert_eq!(fwd, bwd.into_iter().rev().collect::<Vec<_>>());
    }
}
