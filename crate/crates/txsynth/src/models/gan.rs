//! Conditional GAN and Wasserstein conditional GAN.
//!
//! The generator maps (noise || aux) to a profile through a relu output
//! head; the critic scores (profile || aux). The CGAN critic ends in a
//! sigmoid and trains on binary cross-entropy (label 1 real, 0 generated),
//! the WCGAN critic ends in a linear unit, trains on the score difference,
//! and has every weight clamped after each update. Cross-entropy terms are
//! evaluated from pre-activations in softplus form so saturated critics do
//! not overflow.
//!
//! Critic and generator updates are both computed as per-example gradients
//! folded through the same aggregation as the DP path, so a DP run with
//! sigma = 0 and infinite clip norm reproduces a non-DP run bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::mlp::{flatten_grads_into, Mlp};
use crate::models::TrainConfig;
use crate::num::{gaussian_sample, Activation, Matrix, RngStream};
use crate::optim::{adam_step, dp_aggregate, mean_aggregate, AdamState, DpTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanVariant {
    Cgan,
    Wcgan,
}

impl GanVariant {
    pub fn name(self) -> &'static str {
        match self {
            GanVariant::Cgan => "cgan",
            GanVariant::Wcgan => "wcgan",
        }
    }
}

/// Architecture knobs; overridable, defaults documented in the README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanArch {
    pub noise_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    /// WCGAN weight clamp bound; ignored by the CGAN.
    pub clip_value: f64,
}

impl Default for GanArch {
    fn default() -> Self {
        GanArch {
            noise_dim: 16,
            generator_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            hidden_activation: Activation::LeakyRelu,
            clip_value: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    generator: Mlp,
    critic: Mlp,
    noise_dim: usize,
    aux_dim: usize,
    profile_dim: usize,
    variant: GanVariant,
    clip_value: f64,
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanTracePoint {
    pub epoch: usize,
    pub critic_loss: f64,
    pub generator_loss: f64,
}

impl GanModel {
    pub fn new(
        profile_dim: usize,
        aux_dim: usize,
        variant: GanVariant,
        arch: &GanArch,
        rng: &mut RngStream,
    ) -> Self {
        assert!(profile_dim >= 1 && arch.noise_dim >= 1);
        let mut gen_dims = vec![arch.noise_dim + aux_dim];
        gen_dims.extend_from_slice(&arch.generator_hidden);
        gen_dims.push(profile_dim);
        let generator = Mlp::from_dims(&gen_dims, arch.hidden_activation, Activation::Relu, rng);

        let critic_out = match variant {
            GanVariant::Cgan => Activation::Sigmoid,
            GanVariant::Wcgan => Activation::Identity,
        };
        let mut critic_dims = vec![profile_dim + aux_dim];
        critic_dims.extend_from_slice(&arch.critic_hidden);
        critic_dims.push(1);
        let mut critic = Mlp::from_dims(&critic_dims, arch.hidden_activation, critic_out, rng);
        if variant == GanVariant::Wcgan {
            // Start inside the clamp box instead of letting the first update
            // snap a wide init onto the box faces.
            critic.clamp_params(arch.clip_value);
        }
        GanModel {
            generator,
            critic,
            noise_dim: arch.noise_dim,
            aux_dim,
            profile_dim,
            variant,
            clip_value: arch.clip_value,
        }
    }

    pub fn variant(&self) -> GanVariant {
        self.variant
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn aux_dim(&self) -> usize {
        self.aux_dim
    }

    pub fn profile_dim(&self) -> usize {
        self.profile_dim
    }

    pub fn clip_value(&self) -> f64 {
        self.clip_value
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn generator(&self) -> &Mlp {
        &self.generator
    }

    /// One synthetic profile per aux row, paired 1:1 by index.
    pub fn generate(&self, aux: &Matrix, rng: &mut RngStream) -> Result<Matrix> {
        if aux.cols() != self.aux_dim {
            return Err(Error::shape(
                "GanModel::generate",
                format!("aux with {} columns", self.aux_dim),
                format!("{}x{}", aux.rows(), aux.cols()),
            ));
        }
        let noise = gaussian_sample(rng, aux.rows(), self.noise_dim)?;
        let (fake, _) = self.generator.forward(&noise.hconcat(aux)?)?;
        Ok(fake)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.critic.validate()?;
        if self.generator.in_dim() != self.noise_dim + self.aux_dim
            || self.generator.out_dim() != self.profile_dim
            || self.critic.in_dim() != self.profile_dim + self.aux_dim
            || self.critic.out_dim() != 1
        {
            return Err(Error::usage("GAN dimensions inconsistent".to_string()));
        }
        let critic_out = self.critic.layers().last().unwrap().activation;
        let ok = match self.variant {
            GanVariant::Cgan => critic_out == Activation::Sigmoid,
            GanVariant::Wcgan => critic_out == Activation::Identity,
        };
        if !ok {
            return Err(Error::usage(format!(
                "{} critic must end in {}",
                self.variant.name(),
                match self.variant {
                    GanVariant::Cgan => "a sigmoid",
                    GanVariant::Wcgan => "a linear unit",
                }
            )));
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    #[cfg(test)]
    pub(crate) fn generator_mut(&mut self) -> &mut Mlp {
        &mut self.generator
    }
}

/// Numerically stable ln(1 + e^z).
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn check_row_alignment(context: &str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::shape(
            context,
            format!("{} rows", a.rows()),
            format!("{} rows", b.rows()),
        ));
    }
    Ok(())
}

/// Per-example critic gradients with the batch-mean critic loss.
///
/// `noise` supplies the generator draw for the fake batch (one row per real
/// row). Each per-example gradient covers that example's real and fake
/// contribution, so averaging reproduces the batch critic gradient.
pub fn gan_critic_gradients(
    model: &GanModel,
    x_real: &Matrix,
    aux: &Matrix,
    noise: &Matrix,
) -> Result<(Vec<Vec<f64>>, f64)> {
    check_row_alignment("gan_critic_gradients", x_real, aux)?;
    check_row_alignment("gan_critic_gradients noise", x_real, noise)?;
    let n = x_real.rows();
    let mut per_example = Vec::with_capacity(n);
    let mut loss_sum = 0.0;
    for i in 0..n {
        let xi = x_real.row_matrix(i);
        let ai = aux.row_matrix(i);
        let zi = noise.row_matrix(i);
        let (fake, _) = model.generator.forward(&zi.hconcat(&ai)?)?;

        let real_in = xi.hconcat(&ai)?;
        let fake_in = fake.hconcat(&ai)?;
        let (_, real_caches) = model.critic.forward(&real_in)?;
        let (_, fake_caches) = model.critic.forward(&fake_in)?;
        let z_real = real_caches.last().unwrap().pre_activation.get(0, 0);
        let z_fake = fake_caches.last().unwrap().pre_activation.get(0, 0);

        // (loss_i, d loss_i / d z_real, d loss_i / d z_fake)
        let (loss_i, dz_real, dz_fake) = match model.variant {
            GanVariant::Cgan => {
                // 1/2 [ -ln sigma(z_r) - ln(1 - sigma(z_f)) ] in softplus form.
                let loss = 0.5 * (softplus(-z_real) + softplus(z_fake));
                (loss, 0.5 * (sigmoid(z_real) - 1.0), 0.5 * sigmoid(z_fake))
            }
            GanVariant::Wcgan => (z_fake - z_real, -1.0, 1.0),
        };
        loss_sum += loss_i;

        let (real_grads, _) = model
            .critic
            .backward_from_preact(&real_caches, &Matrix::from_vec(1, 1, vec![dz_real])?)?;
        let (fake_grads, _) = model
            .critic
            .backward_from_preact(&fake_caches, &Matrix::from_vec(1, 1, vec![dz_fake])?)?;

        let mut flat = Vec::with_capacity(model.critic.param_count());
        flatten_grads_into(&real_grads, &mut flat);
        let mut flat_fake = Vec::with_capacity(flat.len());
        flatten_grads_into(&fake_grads, &mut flat_fake);
        for (a, b) in flat.iter_mut().zip(&flat_fake) {
            *a += b;
        }
        per_example.push(flat);
    }
    Ok((per_example, loss_sum / n as f64))
}

/// Per-example generator gradients with the batch-mean generator loss.
pub fn gan_generator_gradients(
    model: &GanModel,
    aux: &Matrix,
    noise: &Matrix,
) -> Result<(Vec<Vec<f64>>, f64)> {
    check_row_alignment("gan_generator_gradients", aux, noise)?;
    let n = aux.rows();
    let mut per_example = Vec::with_capacity(n);
    let mut loss_sum = 0.0;
    for i in 0..n {
        let ai = aux.row_matrix(i);
        let zi = noise.row_matrix(i);
        let (fake, gen_caches) = model.generator.forward(&zi.hconcat(&ai)?)?;
        let (_, critic_caches) = model.critic.forward(&fake.hconcat(&ai)?)?;
        let z_f = critic_caches.last().unwrap().pre_activation.get(0, 0);

        let (loss_i, dz) = match model.variant {
            // Non-saturating loss: -ln sigma(z_f).
            GanVariant::Cgan => (softplus(-z_f), sigmoid(z_f) - 1.0),
            GanVariant::Wcgan => (-z_f, -1.0),
        };
        loss_sum += loss_i;

        let (_, d_critic_in) = model
            .critic
            .backward_from_preact(&critic_caches, &Matrix::from_vec(1, 1, vec![dz])?)?;
        let d_fake = d_critic_in.slice_cols(0, model.profile_dim);
        let (gen_grads, _) = model.generator.backward(&gen_caches, &d_fake)?;

        let mut flat = Vec::with_capacity(model.generator.param_count());
        flatten_grads_into(&gen_grads, &mut flat);
        per_example.push(flat);
    }
    Ok((per_example, loss_sum / n as f64))
}

/// One critic update on a real batch plus a freshly generated fake batch.
/// WCGAN critics are clamped to `[-clip_value, clip_value]` afterwards.
pub fn gan_critic_step(
    model: &mut GanModel,
    x_real: &Matrix,
    aux: &Matrix,
    cfg: &TrainConfig,
    opt: &mut AdamState,
    rng: &mut RngStream,
) -> Result<f64> {
    let noise = gaussian_sample(rng, x_real.rows(), model.noise_dim)?;
    let (per_example, loss) = gan_critic_gradients(model, x_real, aux, &noise)?;
    let agg = if cfg.dp.enabled {
        dp_aggregate(&per_example, &cfg.dp, rng)?
    } else {
        mean_aggregate(&per_example)?
    };
    let mut params = Vec::with_capacity(model.critic.param_count());
    model.critic.flatten_params_into(&mut params);
    adam_step(opt, &mut params, &agg)?;
    let mut cursor = 0;
    model.critic.load_params(&params, &mut cursor)?;
    if model.variant == GanVariant::Wcgan {
        model.critic.clamp_params(model.clip_value);
    }
    Ok(loss)
}

/// One generator update; the critic is left untouched.
pub fn gan_generator_step(
    model: &mut GanModel,
    aux: &Matrix,
    cfg: &TrainConfig,
    opt: &mut AdamState,
    rng: &mut RngStream,
) -> Result<f64> {
    if aux.rows() == 0 {
        return Err(Error::usage("gan_generator_step requires a non-empty aux batch"));
    }
    let noise = gaussian_sample(rng, aux.rows(), model.noise_dim)?;
    let (per_example, loss) = gan_generator_gradients(model, aux, &noise)?;
    let dp_generator = cfg.dp.enabled && cfg.dp.apply_to == DpTarget::AllNetworks;
    let agg = if dp_generator {
        dp_aggregate(&per_example, &cfg.dp, rng)?
    } else {
        mean_aggregate(&per_example)?
    };
    let mut params = Vec::with_capacity(model.generator.param_count());
    model.generator.flatten_params_into(&mut params);
    adam_step(opt, &mut params, &agg)?;
    let mut cursor = 0;
    model.generator.load_params(&params, &mut cursor)?;
    Ok(loss)
}

/// Adam momentum for GAN training; 0.5 tames oscillation in the
/// adversarial loop.
const GAN_ADAM_BETA1: f64 = 0.5;
const GAN_ADAM_BETA2: f64 = 0.999;

/// Train a GAN: per batch, `critic_steps_per_generator_step` critic updates
/// (the critic goes first) followed by one generator update.
pub fn train_gan(
    data: &Matrix,
    aux: &Matrix,
    arch: &GanArch,
    cfg: &TrainConfig,
    variant: GanVariant,
) -> Result<(GanModel, Vec<GanTracePoint>)> {
    cfg.validate()?;
    check_row_alignment("train_gan", data, aux)?;
    if data.rows() < cfg.batch_size {
        return Err(Error::usage(format!(
            "training data has {} rows, fewer than batch_size {}",
            data.rows(),
            cfg.batch_size
        )));
    }
    let root = RngStream::new(cfg.seed);
    let mut init_rng = root.substream("gan-init");
    let mut shuffle_rng = root.substream("gan-shuffle");
    let mut step_rng = root.substream("gan-noise");

    let mut model = GanModel::new(data.cols(), aux.cols(), variant, arch, &mut init_rng);
    let mut critic_opt = AdamState::with_betas(
        model.critic.param_count(),
        cfg.learning_rate,
        GAN_ADAM_BETA1,
        GAN_ADAM_BETA2,
    );
    let mut gen_opt = AdamState::with_betas(
        model.generator.param_count(),
        cfg.learning_rate,
        GAN_ADAM_BETA1,
        GAN_ADAM_BETA2,
    );

    let n = data.rows();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut idx: Vec<usize> = (0..n).collect();
        shuffle_rng.shuffle(&mut idx);
        let mut critic_sum = 0.0;
        let mut critic_count = 0usize;
        let mut gen_sum = 0.0;
        let mut gen_count = 0usize;
        for batch_idx in idx.chunks(cfg.batch_size) {
            let xb = data.take_rows(batch_idx);
            let ab = aux.take_rows(batch_idx);
            for _ in 0..cfg.critic_steps_per_generator_step {
                let loss = gan_critic_step(&mut model, &xb, &ab, cfg, &mut critic_opt, &mut step_rng)?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged { model: variant.name().to_string(), epoch });
                }
                critic_sum += loss;
                critic_count += 1;
            }
            let gloss = gan_generator_step(&mut model, &ab, cfg, &mut gen_opt, &mut step_rng)?;
            if !gloss.is_finite() {
                return Err(Error::TrainingDiverged { model: variant.name().to_string(), epoch });
            }
            gen_sum += gloss;
            gen_count += 1;
        }
        trace.push(GanTracePoint {
            epoch,
            critic_loss: critic_sum / critic_count as f64,
            generator_loss: gen_sum / gen_count as f64,
        });
    }
    Ok((model, trace))
}
