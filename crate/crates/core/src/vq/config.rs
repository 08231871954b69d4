use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VqConfig {
    pub codebook_size: usize,
    pub code_dim: usize,
    /// Frames per token.
    pub stride: usize,
    pub beta: f64,
    pub gamma: f64,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub intermediate: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Seed codebook entries from encoder outputs on the training set before step 0.
    pub data_init: bool,
    /// Every this many steps, entries unused since the last check are moved
    /// onto encoder outputs from the current batch; 0 disables.
    pub dead_code_interval: usize,
    /// Add the positional table to encoder inputs. Off by default: position
    /// then dominates nearest-code assignment and tokens stop tracking motion.
    pub encoder_positions: bool,
    /// Encoder attention reaches at most this many tokens to either side;
    /// `None` attends over the whole clip.
    pub encoder_window: Option<usize>,
}

impl Default for VqConfig {
    fn default() -> Self {
        Self {
            codebook_size: 256,
            code_dim: 128,
            stride: 2,
            beta: 0.25,
            gamma: 1.0,
            hidden_dim: 128,
            layers: 2,
            heads: 4,
            intermediate: 256,
            learning_rate: 1e-4,
            steps: 3000,
            batch_size: 16,
            seed: 0,
            data_init: true,
            dead_code_interval: 20,
            encoder_positions: false,
            encoder_window: Some(1),
        }
    }
}

impl VqConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("codebook_size", self.codebook_size),
            ("code_dim", self.code_dim),
            ("stride", self.stride),
            ("hidden_dim", self.hidden_dim),
            ("heads", self.heads),
            ("intermediate", self.intermediate),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("vq.{name} must be positive")));
        }
        if self.hidden_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "vq.hidden_dim {} not divisible by vq.heads {}",
                self.hidden_dim, self.heads
            )));
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("vq.{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("vq.learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}
