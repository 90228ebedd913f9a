//! Joint HDR reconstruction and x2 super-resolution of single LDR images.
//!
//! Luminance is split into a smooth illumination layer and a log-reflectance
//! layer. Illumination is upscaled and brightened analytically; reflectance
//! is upscaled by a learned stacked U-Net. The two are recombined, merged
//! with bicubic chroma and mapped to linear irradiance.

pub mod error;
pub mod image;
pub mod pipeline;
pub mod refnet;
pub mod retinex;
pub mod tensor;
pub mod training;
pub mod wls;

pub use error::{Error, ErrorKind, Result};
pub use image::{PixelRange, Plane, RasterImage};
pub use pipeline::{infer, InferenceOutput, PipelineConfig};
pub use refnet::{build_refnet, RefNet, RefNetConfig};
pub use tensor::{Network, Tensor};
pub use wls::WlsParams;
