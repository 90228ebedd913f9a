//! End-to-end inference and display mappings.

mod config;
mod infer;
mod tonemap;

pub use config::PipelineConfig;
pub use infer::{infer, predict_reflectance, reflect_pad, InferenceOutput};
pub use tonemap::{linear_stretch, reinhard_tonemap, DisplayImage, DISPLAY_GAMMA, LOG_AVERAGE_DELTA};
