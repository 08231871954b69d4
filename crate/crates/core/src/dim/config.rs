use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which decoder stream feeds each role's token head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleAlignment {
    /// Speaker tokens are predicted from listener-side features and vice versa.
    Cross,
    /// Each role's tokens come from its own stream.
    Straight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimConfig {
    pub mask_p: f64,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub intermediate: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub decode_role_alignment: RoleAlignment,
    /// Adds the listener-anchored direction to the contrastive term.
    pub symmetric_contrastive: bool,
    /// Predict codebook tokens; when false the heads regress motion directly.
    pub use_vq: bool,
    /// Run the joint encoder over both streams; when false each stream bypasses it.
    pub two_branch: bool,
    /// Decode training predictions from the argmax tokens, passing gradients
    /// through the softmax (straight-through). When false the softmax-weighted
    /// codebook mixture is decoded.
    pub straight_through: bool,
}

impl Default for DimConfig {
    fn default() -> Self {
        Self {
            mask_p: 50.0,
            tau: 0.07,
            lambda1: 0.1,
            lambda2: 1.0,
            model_dim: 256,
            layers: 8,
            heads: 8,
            intermediate: 768,
            learning_rate: 1e-5,
            epochs: 100,
            batch_size: 16,
            seed: 0,
            decode_role_alignment: RoleAlignment::Cross,
            symmetric_contrastive: false,
            use_vq: true,
            two_branch: true,
            straight_through: false,
        }
    }
}

impl DimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.mask_p) {
            return Err(Error::Config(format!("dim.mask_p must be in [0, 100], got {}", self.mask_p)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("dim.tau must be positive, got {}", self.tau)));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("dim.{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.model_dim == 0 || self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "dim.heads ({}) must divide dim.model_dim ({})",
                self.heads, self.model_dim
            )));
        }
        if self.intermediate == 0 || self.batch_size == 0 {
            return Err(Error::Config("dim.intermediate and dim.batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("dim.learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}
