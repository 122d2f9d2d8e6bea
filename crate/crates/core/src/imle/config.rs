use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::OptimizerConfig;

/// Autoencoder pretraining settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeConfig {
    pub epochs: usize,
    pub eta: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            eta: 5e-4,
            batch_size: 16,
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "ae batch_size must be positive".into(),
            ));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ae eta must be positive, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Conditional IMLE generator training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImleConfig {
    /// Samples drawn per input when selecting the nearest one.
    pub m: usize,
    pub outer_epochs: usize,
    pub inner_steps: usize,
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub eta: f64,
    /// Weight of the L1 latent loss.
    pub latent_loss_weight: f64,
    /// Weight of the UHD loss on the decoded completion.
    pub uhd_loss_weight: f64,
    pub noise_dim: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for ImleConfig {
    fn default() -> Self {
        Self {
            m: 10,
            outer_epochs: 300,
            inner_steps: 20,
            batch_size: 64,
            minibatch_size: 16,
            eta: 5e-4,
            latent_loss_weight: 1.0,
            uhd_loss_weight: 0.1,
            noise_dim: 32,
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl ImleConfig {
    fn validate_common(&self) -> Result<()> {
        if self.batch_size == 0 || self.minibatch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch sizes must be positive".into(),
            ));
        }
        if self.minibatch_size > self.batch_size {
            return Err(Error::InvalidArgument(format!(
                "minibatch_size ({}) must not exceed batch_size ({})",
                self.minibatch_size, self.batch_size
            )));
        }
        if !(self.latent_loss_weight > 0.0 && self.latent_loss_weight.is_finite()) {
            return Err(Error::InvalidArgument(
                "latent_loss_weight must be > 0".into(),
            ));
        }
        if !(self.uhd_loss_weight >= 0.0 && self.uhd_loss_weight.is_finite()) {
            return Err(Error::InvalidArgument(
                "uhd_loss_weight must be >= 0".into(),
            ));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        Ok(())
    }

    pub fn validate_imle(&self) -> Result<()> {
        self.validate_common()?;
        if self.m < 2 {
            return Err(Error::InvalidArgument(format!(
                "IMLE needs m >= 2 samples per input (got {}); m = 1 is plain regression, use the unimodal baseline",
                self.m
            )));
        }
        if self.noise_dim == 0 {
            return Err(Error::InvalidArgument("IMLE needs noise_dim >= 1".into()));
        }
        Ok(())
    }

    pub fn validate_baseline(&self) -> Result<()> {
        self.validate_common()?;
        if self.m != 1 || self.noise_dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "the unimodal baseline uses m = 1 and noise_dim = 0 (got m = {}, noise_dim = {})",
                self.m, self.noise_dim
            )));
        }
        Ok(())
    }

    /// The same schedule with noise and selection switched off.
    pub fn baseline(&self) -> Self {
        Self {
            m: 1,
            noise_dim: 0,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let c = ImleConfig::default();
        c.validate_imle().unwrap();
        assert!(c.validate_baseline().is_err());
        c.baseline().validate_baseline().unwrap();
        assert!(ImleConfig { m: 1, ..c.clone() }.validate_imle().is_err());
        assert!(ImleConfig {
            minibatch_size: 65,
            ..c.clone()
        }
        .validate_imle()
        .is_err());
        assert!(ImleConfig {
            latent_loss_weight: 0.0,
            ..c.clone()
        }
        .validate_imle()
        .is_err());
        assert!(ImleConfig {
            uhd_loss_weight: -1.0,
            ..c
        }
        .validate_imle()
        .is_err());
    }
}
