//! Masked dual-branch pretraining over speaker and listener token streams.

pub mod config;
pub mod loss;
pub mod model;
pub mod train;

pub use config::{DimConfig, RoleAlignment};
pub use loss::{
    contrastive_loss, dim_losses, masked_token_hits, role_reconstruction_loss, symmetric_contrastive_loss,
    DimLossTensors, DimLosses, LossWeights,
};
pub use model::{argmax_tokens, is_joint_decoder_param, sample_tokens, DimBatch, DimForward, DimModel, MaskMode};
pub use train::{batch_masks, mask_seed, masked_token_accuracy, pretrain, DimTrainLog};
