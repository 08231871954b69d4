//! Listener and speaker fine-tuning, generation and reference baselines.

pub mod baselines;
pub mod generate;
pub mod train;

pub use baselines::{
    baseline_mirror, baseline_nearest_motion, baseline_random, MeanBaseline, MirrorBaseline, NearestMotionBaseline,
    RandomBaseline,
};
pub use generate::{read_generated, write_generated, Generated, GeneratedSidecar};
pub use train::{finetune_listener, finetune_speaker, initial_model, FinetuneConfig, FinetuneLog, GeneratorModel, Init, Task};
