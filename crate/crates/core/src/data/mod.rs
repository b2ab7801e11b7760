//! Dataset ingestion, augmentation, synthetic vein images and batching.

pub mod augment;
pub mod image_io;
pub mod loader;
pub mod manifest;
pub mod synth;

pub use augment::{augment, AugmentPolicy};
pub use image_io::{load_image, Gray};
pub use loader::{epoch_batches, ImageSet};
pub use manifest::{scan_dataset, DatasetManifest, Entry, Split, SplitRule};
pub use synth::{generate_synthetic, SyntheticVeinSpec};
