//! Caption manifests, the synthetic clip generator, the log-mel feature
//! cache and checkpoint files.

mod cache;
mod checkpoint;
mod clips;
mod manifest;
mod synth;

pub use cache::{cache_key, FeatureCache};
pub use checkpoint::{
    config_hash, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
    CheckpointConfig, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use clips::clips_from_manifest;
pub use manifest::{load_manifest, merge_splits, write_manifest, DatasetManifest, ManifestRow, CAPTION_COLUMNS};
pub use synth::{synth_dataset, Grammar, Pitch, SynthEvent, SynthSpec, Tempo};
