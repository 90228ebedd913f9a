//! Training data preparation and the reconstruction / adversarial training loops.

pub mod dataset;
pub mod patches;
pub mod ragan;
pub mod synthetic;
pub mod train;

pub use dataset::{prepare_dataset, prepare_pair, DatasetOptions, PrepareReport};
pub use patches::{
    apply_dihedral, extract_patch_pairs, grid_positions, inverse_dihedral, to_bounded_f32, PatchPair,
    PatchStore, AUGMENTATIONS, BOUND_LIMIT, HR_PATCH, LR_PATCH, LR_STRIDE, PATCH_STORE_MAGIC,
    PATCH_STORE_VERSION,
};
pub use ragan::{ragan_discriminator_loss, ragan_generator_loss, RaganLoss};
pub use synthetic::{synthetic_pair, synthetic_patch_store, synthetic_reflectance};
pub use train::{checkpoint_path, train, StepRecord, TrainConfig, TrainMode, TrainReport, Trainer};
