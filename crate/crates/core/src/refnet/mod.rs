//! REF-Net, the stacked-hourglass reflectance generator, its patch
//! discriminator, and the `HSRW` weight file format.

mod discriminator;
mod generator;
mod weights;

pub use discriminator::{build_discriminator, discriminator_logits, DISCRIMINATOR_SLOPE};
pub use generator::{
    build_refnet, refnet_forward, ParamBudget, RefNet, RefNetConfig, DEFAULT_BASE_CHANNELS,
    DEFAULT_UNET_DEPTH,
};
pub use weights::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
