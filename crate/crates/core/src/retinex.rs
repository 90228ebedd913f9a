//! Retinex split of linear luminance into illumination and log-reflectance.

use crate::error::{Error, Result};
use crate::image::{bicubic_resize, gamma_map, Plane};
use crate::wls::{solve_wls, WlsParams};

/// Lower bound applied to luminance and illumination before any logarithm.
pub const ILLUMINATION_FLOOR: f64 = 1e-4;
/// Margin kept from +-1 before the inverse hyperbolic tangent.
pub const ATANH_MARGIN: f64 = 1e-6;
/// Exponent compensating the display non-linearity of the illumination.
pub const ILLUMINATION_GAMMA: f64 = 1.0 / 2.2;

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub illumination: Plane,
    pub reflectance: Plane,
}

/// WLS-smoothed luminance, floored at [`ILLUMINATION_FLOOR`]. The smoothing
/// weights come from `ln(y + floor)`.
pub fn estimate_illumination(y_linear: &Plane, params: &WlsParams) -> Result<Plane> {
    let guidance = y_linear.map(|v| v.max(0.0) + ILLUMINATION_FLOOR);
    let smooth = solve_wls(y_linear, &guidance, params)?;
    Ok(smooth.map(|v| v.max(ILLUMINATION_FLOOR)))
}

/// `R = ln(max(Y, floor)) - ln(I)`.
pub fn compute_reflectance(y_linear: &Plane, illumination: &Plane) -> Result<Plane> {
    y_linear.check_same_shape(illumination, "reflectance luminance/illumination")?;
    if let Some(v) = illumination.data().iter().find(|&&v| v < ILLUMINATION_FLOOR) {
        return Err(Error::Range(format!("illumination {v} below floor {ILLUMINATION_FLOOR}")));
    }
    y_linear.zip_map(illumination, |y, i| y.max(ILLUMINATION_FLOOR).ln() - i.ln())
}

pub fn decompose(y_linear: &Plane, params: &WlsParams) -> Result<DecompositionResult> {
    let illumination = estimate_illumination(y_linear, params)?;
    let reflectance = compute_reflectance(y_linear, &illumination)?;
    Ok(DecompositionResult { illumination, reflectance })
}

/// Maps reflectance into `(-1, 1)` with `tanh`.
pub fn bound_reflectance(r: &Plane) -> Plane {
    r.map(f64::tanh)
}

/// `atanh` after clamping into `[-1 + margin, 1 - margin]`.
pub fn unbound_reflectance(t: &Plane) -> Plane {
    let lim = 1.0 - ATANH_MARGIN;
    t.map(|v| v.clamp(-lim, lim).atanh())
}

/// Bicubic upscaling followed by the `x^(1/2.2)` compensation curve.
pub fn enhance_illumination(i_ll: &Plane, scale: f64) -> Result<Plane> {
    enhance_illumination_with_gamma(i_ll, scale, ILLUMINATION_GAMMA)
}

/// [`enhance_illumination`] with an explicit compensation exponent.
pub fn enhance_illumination_with_gamma(i_ll: &Plane, scale: f64, gamma: f64) -> Result<Plane> {
    let up = bicubic_resize(i_ll, scale)?;
    let clamped = up.map(|v| v.clamp(ILLUMINATION_FLOOR, 1.0));
    gamma_map(&clamped, gamma)
}

/// `Y = I * exp(R)`.
pub fn recombine(i_hat: &Plane, r_hat: &Plane) -> Result<Plane> {
    i_hat.check_same_shape(r_hat, "recombine illumination/reflectance")?;
    if let Some(v) = i_hat.data().iter().find(|&&v| v <= 0.0) {
        return Err(Error::Range(format!("illumination must be positive, found {v}")));
    }
    i_hat.zip_map(r_hat, |i, r| i * r.exp())
}
