//! Per-role VQ-VAE motion codebooks.

pub mod config;
pub mod model;
pub mod quantize;
pub mod train;

pub use config::VqConfig;
pub use model::{is_decoder_param, is_encoder_param, is_statistic, QuantSnapshot, StopGrad, VqLossTensors, VqLosses, VqModel};
pub use quantize::{nearest_code, quantize_rows, TokenSequence};
pub use train::{train_vq, VqTrainLog};
pub(crate) use train::BatchSampler;
