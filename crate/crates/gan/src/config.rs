use serde::{Deserialize, Serialize};

use crate::error::{GanError, Result};

/// Smallest side for which the patch discriminator still yields a score map.
pub const MIN_IMAGE_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub image_size: usize,
    pub base_channels: usize,
    pub lambda_l1: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub dropout: f32,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            image_size: 512,
            base_channels: 64,
            lambda_l1: 100.0,
            epochs: 25,
            batch_size: 32,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            dropout: 0.5,
            seed: 0,
        }
    }
}

impl GanConfig {
    /// Settings small enough to train on one CPU core in minutes.
    pub fn desk() -> Self {
        Self {
            image_size: 64,
            base_channels: 16,
            ..Self::default()
        }
    }

    /// Number of down-sampling stages of the generator.
    pub fn depth(&self) -> usize {
        self.image_size.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GanError::InvalidArgument(msg));
        if !self.image_size.is_power_of_two() || self.image_size < MIN_IMAGE_SIZE {
            return bad(format!(
                "image_size {} must be a power of two >= {MIN_IMAGE_SIZE}",
                self.image_size
            ));
        }
        if self.base_channels == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("base_channels, batch_size and epochs must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite()) {
            return bad(format!("lambda_l1 {} must be non-negative", self.lambda_l1));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        Ok(())
    }
}
