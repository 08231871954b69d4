//! Motion/audio data model, dataset files, frame masking and the synthetic corpus.

pub mod manifest;
pub mod mask;
pub mod motion;
pub mod role;
pub mod synth;

pub use manifest::{read_dataset, write_dataset, DatasetManifest, ManifestEntry, Split};
pub use mask::{masked_count, uniform_mask, MaskMap};
pub use motion::{
    align_audio, AudioFeatureSequence, DyadicSample, MotionPart, MotionSequence, EXPR_DIM,
    MOTION_DIM, POSE_DIM,
};
pub use role::Role;
pub use synth::{synth_clips, synth_dyads, Coupling, SynthClip, SynthConfig, SynthWorld};
