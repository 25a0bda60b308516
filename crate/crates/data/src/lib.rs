//! Dataset ingestion for the place descriptor: the on-disk layout, sample
//! loading, canonical preprocessing, timestamp association and a seeded
//! synthetic scene generator.

pub mod associate;
pub mod layout;
pub mod preprocess;
pub mod sample;
pub mod synth;

pub use associate::associate_by_timestamp;
pub use layout::{DatasetManifest, PoseRecord, Split};
pub use preprocess::{preprocess, sample_seed, PreprocessTarget};
pub use sample::{load_sample, Sample};
pub use synth::{synth_generate, RevisitMode};

/// Load and preprocess one sample with its per-sample seed.
pub fn load_preprocessed(
    manifest: &DatasetManifest,
    id: u64,
    target: PreprocessTarget,
) -> triplace_core::Result<Sample> {
    preprocess(&load_sample(manifest, id)?, target, sample_seed(id))
}
