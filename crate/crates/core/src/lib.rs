//! Dyadic interaction modeling for speaker/listener facial motion.
//!
//! The pipeline has four stages:
//!
//! 1. [`vq`]: per-role VQ-VAE motion codebooks turn 56-d motion into discrete tokens.
//! 2. [`dim`]: masked dual-branch pretraining over speaker and listener streams with a
//!    contrastive speaker–listener matching term.
//! 3. [`finetune`]: listener generation from speaker motion + audio, and speaker
//!    generation from audio alone.
//! 4. [`metrics`]: FD, P-FD, MSE, SID, Var, rPCC, LVE and FDD.
//!
//! [`data`] holds the motion model, the DIMT tensor files and a synthetic dyad
//! generator used for desk-scale experiments.

pub mod cli;
pub mod data;
pub mod dim;
pub mod error;
pub mod finetune;
pub mod metrics;
pub mod nn;
pub mod tensor_file;
pub mod vq;

pub use error::{Error, Result};
