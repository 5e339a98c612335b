//! Generative models: VAE with two generation modes, conditional GAN, and
//! Wasserstein conditional GAN, each with its training loop.

mod bundle;
mod gan;
mod mlp;
mod vae;

pub use bundle::{BundleModel, ModelBundle, BUNDLE_FORMAT_VERSION};
pub use gan::{
    gan_critic_gradients, gan_critic_step, gan_generator_gradients, gan_generator_step, train_gan,
    GanArch, GanModel, GanTracePoint, GanVariant,
};
pub use mlp::{flatten_grads_into, LayerGrads, Mlp};
pub use vae::{
    reparameterize, train_vae, vae_batch_gradients, vae_loss, VaeArch, VaeLoss, VaeModel,
    VaeTracePoint,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::DpConfig;

/// Shared training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Critic updates per generator update; ignored by the VAE.
    pub critic_steps_per_generator_step: usize,
    pub dp: DpConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            critic_steps_per_generator_step: 1,
            dp: DpConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.batch_size == 0 {
            issues.push("batch_size must be >= 1".to_string());
        }
        if self.critic_steps_per_generator_step == 0 {
            issues.push("critic_steps_per_generator_step must be >= 1".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            issues.push(format!("learning_rate must be positive (got {})", self.learning_rate));
        }
        if self.dp.enabled {
            self.dp.validate()?;
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(issues))
        }
    }
}
