//! Relativistic average GAN losses, evaluated on discriminator logits.
//!
//! With `m_r`, `m_f` the mean real and fake logits,
//! `D(x_r) = sigmoid(C_r - m_f)` and `D(x_f) = sigmoid(C_f - m_r)`:
//!
//! * generator: `-mean log D(x_r) - mean log(1 - D(x_f))`
//! * discriminator: `-mean log D(x_f) - mean log(1 - D(x_r))`
//!
//! Both are written with softplus (`-log sigmoid(z) = softplus(-z)`,
//! `-log(1 - sigmoid(z)) = softplus(z)`) so saturated logits stay finite.

use crate::error::{Error, Result};

/// Loss value and its gradient with respect to both logit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RaganLoss {
    pub loss: f64,
    pub grad_real: Vec<f32>,
    pub grad_fake: Vec<f32>,
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn mean(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64
}

/// `mean_a softplus(-(a - mean b)) + mean_b softplus(b - mean a)` and its
/// gradients `(d/da, d/db)`.
fn relativistic(a: &[f32], b: &[f32]) -> Result<(f64, Vec<f32>, Vec<f32>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("RaGAN loss needs a non-empty batch".into()));
    }
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{} real logits vs {} fake logits",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let mut loss = 0.0;
    let mut alpha = Vec::with_capacity(a.len());
    for &v in a {
        let z = v as f64 - mb;
        loss += softplus(-z) / na;
        alpha.push(-sigmoid(-z) / na);
    }
    let mut beta = Vec::with_capacity(b.len());
    for &v in b {
        let z = v as f64 - ma;
        loss += softplus(z) / nb;
        beta.push(sigmoid(z) / nb);
    }
    let (sa, sb) = (alpha.iter().sum::<f64>(), beta.iter().sum::<f64>());
    let ga = alpha.iter().map(|&x| (x - sb / na) as f32).collect();
    let gb = beta.iter().map(|&x| (x - sa / nb) as f32).collect();
    Ok((loss, ga, gb))
}

pub fn ragan_generator_loss(logits_real: &[f32], logits_fake: &[f32]) -> Result<RaganLoss> {
    let (loss, grad_real, grad_fake) = relativistic(logits_real, logits_fake)?;
    Ok(RaganLoss { loss, grad_real, grad_fake })
}

pub fn ragan_discriminator_loss(logits_real: &[f32], logits_fake: &[f32]) -> Result<RaganLoss> {
    let (loss, grad_fake, grad_real) = relativistic(logits_fake, logits_real)?;
    Ok(RaganLoss { loss, grad_real, grad_fake })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_LN2: f64 = 1.386_294_361_119_890_6;

    #[test]
    fn equal_logits() {
        let v = [0.3f32; 5];
        assert!((ragan_generator_loss(&v, &v).unwrap().loss - TWO_LN2).abs() < 1e-12);
        assert!((ragan_discriminator_loss(&v, &v).unwrap().loss - TWO_LN2).abs() < 1e-12);
    }

    #[test]
    fn saturation() {
        let g = ragan_generator_loss(&[1e4, 1e4], &[-1e4, -1e4]).unwrap();
        assert!(g.loss.abs() < 1e-12);
        let d = ragan_discriminator_loss(&[1e4, 1e4], &[-1e4, -1e4]).unwrap();
        assert!((d.loss - 4e4).abs() < 1e-6);
    }

    #[test]
    fn empty_and_mismatched() {
        assert!(matches!(ragan_generator_loss(&[], &[]), Err(Error::Parameter(_))));
        assert!(matches!(ragan_generator_loss(&[0.0], &[0.0, 1.0]), Err(Error::Shape(_))));
    }
}
