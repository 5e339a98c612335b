//! Variational autoencoder over log-space profiles.
//!
//! The encoder trunk feeds two parallel linear heads for the posterior mean
//! and log-variance; the decoder maps latent vectors back to profile space
//! through a relu output head, so exact zeros are reachable and sparsity is
//! representable. The loss is mean squared reconstruction error (summed per
//! row) plus the analytic KL divergence to the standard normal prior, both
//! averaged over the batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::mlp::{flatten_grads_into, Mlp};
use crate::models::TrainConfig;
use crate::num::{
    dense_backward, dense_forward, gaussian_sample, Activation, DenseLayer, Matrix, RngStream,
};
use crate::optim::{adam_step, dp_aggregate, mean_aggregate, AdamState};

/// Architecture knobs; overridable, defaults documented in the README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeArch {
    /// Encoder trunk widths between input and the two heads.
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Decoder widths between the latent and the output layer.
    pub decoder_hidden: Vec<usize>,
    pub hidden_activation: Activation,
}

impl Default for VaeArch {
    fn default() -> Self {
        VaeArch {
            encoder_hidden: vec![64, 32],
            latent_dim: 8,
            decoder_hidden: vec![32, 64],
            hidden_activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    trunk: Mlp,
    mu_head: DenseLayer,
    logvar_head: DenseLayer,
    decoder: Mlp,
    latent_dim: usize,
    profile_dim: usize,
}

/// Loss components; `total = recon + kl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// One row of the training trace, evaluated on the held-out slice at the
/// posterior mean (no sampling noise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeTracePoint {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

impl VaeModel {
    pub fn new(profile_dim: usize, arch: &VaeArch, rng: &mut RngStream) -> Self {
        assert!(profile_dim >= 1 && arch.latent_dim >= 1);
        let mut trunk_dims = vec![profile_dim];
        trunk_dims.extend_from_slice(&arch.encoder_hidden);
        let trunk = if arch.encoder_hidden.is_empty() {
            // Degenerate trunk: identity-activation single layer.
            Mlp::from_dims(&[profile_dim, profile_dim], arch.hidden_activation, Activation::Identity, rng)
        } else {
            Mlp::from_dims(&trunk_dims, arch.hidden_activation, arch.hidden_activation, rng)
        };
        let trunk_out = trunk.out_dim();
        let mu_head = DenseLayer::xavier(trunk_out, arch.latent_dim, Activation::Identity, rng);
        let logvar_head = DenseLayer::xavier(trunk_out, arch.latent_dim, Activation::Identity, rng);
        let mut dec_dims = vec![arch.latent_dim];
        dec_dims.extend_from_slice(&arch.decoder_hidden);
        dec_dims.push(profile_dim);
        let decoder = Mlp::from_dims(&dec_dims, arch.hidden_activation, Activation::Relu, rng);
        VaeModel { trunk, mu_head, logvar_head, decoder, latent_dim: arch.latent_dim, profile_dim }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn profile_dim(&self) -> usize {
        self.profile_dim
    }

    /// Posterior parameters for a batch of log-space profiles.
    pub fn encode(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.profile_dim {
            return Err(Error::shape(
                "VaeModel::encode",
                format!("{} profile columns", self.profile_dim),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        let (h, _) = self.trunk.forward(x)?;
        let (mu, _) = dense_forward(&self.mu_head, &h)?;
        let (logvar, _) = dense_forward(&self.logvar_head, &h)?;
        Ok((mu, logvar))
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        let (x_hat, _) = self.decoder.forward(z)?;
        Ok(x_hat)
    }

    /// Encode real rows, sample fresh latent representations, decode.
    /// Output rows pair 1:1 with input rows.
    pub fn generate_from_data(&self, x_real: &Matrix, rng: &mut RngStream) -> Result<Matrix> {
        let (mu, logvar) = self.encode(x_real)?;
        let noise = gaussian_sample(rng, mu.rows(), mu.cols())?;
        let z = reparameterize(&mu, &logvar, &noise)?;
        self.decode(&z)
    }

    /// Decode `n` latent vectors drawn from the standard normal prior.
    pub fn generate_from_noise(&self, n: usize, rng: &mut RngStream) -> Result<Matrix> {
        if n == 0 {
            return Err(Error::usage("generate_from_noise requires n >= 1"));
        }
        let z = gaussian_sample(rng, n, self.latent_dim)?;
        self.decode(&z)
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count()
            + self.mu_head.param_count()
            + self.logvar_head.param_count()
            + self.decoder.param_count()
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.trunk.flatten_params_into(&mut out);
        out.extend_from_slice(self.mu_head.weights.data());
        out.extend_from_slice(&self.mu_head.bias);
        out.extend_from_slice(self.logvar_head.weights.data());
        out.extend_from_slice(&self.logvar_head.bias);
        self.decoder.flatten_params_into(&mut out);
        out
    }

    pub fn load_flat_params(&mut self, src: &[f64]) -> Result<()> {
        let mut cursor = 0;
        self.trunk.load_params(src, &mut cursor)?;
        for head in [&mut self.mu_head, &mut self.logvar_head] {
            let w_len = head.weights.data().len();
            head.weights.data_mut().copy_from_slice(&src[cursor..cursor + w_len]);
            cursor += w_len;
            let b_len = head.bias.len();
            head.bias.copy_from_slice(&src[cursor..cursor + b_len]);
            cursor += b_len;
        }
        self.decoder.load_params(src, &mut cursor)?;
        if cursor != src.len() {
            return Err(Error::shape(
                "VaeModel::load_flat_params",
                format!("{cursor} parameters"),
                format!("{} parameters", src.len()),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.trunk.validate()?;
        self.mu_head.validate()?;
        self.logvar_head.validate()?;
        self.decoder.validate()?;
        if self.decoder.out_dim() != self.profile_dim || self.trunk.in_dim() != self.profile_dim {
            return Err(Error::usage("VAE profile dimension inconsistent".to_string()));
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn decoder_mut(&mut self) -> &mut Mlp {
        &mut self.decoder
    }
}

/// `z = mu + exp(logvar / 2) * noise`, elementwise.
pub fn reparameterize(mu: &Matrix, logvar: &Matrix, noise: &Matrix) -> Result<Matrix> {
    mu.check_same_shape("reparameterize", logvar)?;
    mu.check_same_shape("reparameterize", noise)?;
    let std = logvar.map(|v| (0.5 * v).exp());
    let scaled = std.zip_map(noise, |s, n| s * n)?;
    mu.add(&scaled)
}

/// Reconstruction error plus KL divergence to the standard normal prior.
///
/// recon: squared error summed over profile columns, averaged over rows.
/// kl: -1/2 sum(1 + logvar - mu^2 - exp(logvar)) per row, averaged over
/// rows; non-negative because exp(v) >= 1 + v (the tiny clamp only absorbs
/// rounding residue).
pub fn vae_loss(x: &Matrix, x_hat: &Matrix, mu: &Matrix, logvar: &Matrix) -> Result<VaeLoss> {
    x.check_same_shape("vae_loss reconstruction", x_hat)?;
    mu.check_same_shape("vae_loss posterior", logvar)?;
    if x.rows() != mu.rows() {
        return Err(Error::shape(
            "vae_loss",
            format!("{} rows", x.rows()),
            format!("{} rows", mu.rows()),
        ));
    }
    let n = x.rows() as f64;
    let mut recon = 0.0;
    for (a, b) in x.data().iter().zip(x_hat.data()) {
        let d = a - b;
        recon += d * d;
    }
    recon /= n;
    let mut kl = 0.0;
    for (m, v) in mu.data().iter().zip(logvar.data()) {
        kl += -0.5 * (1.0 + v - m * m - v.exp());
    }
    kl = (kl / n).max(0.0);
    Ok(VaeLoss { total: recon + kl, recon, kl })
}

/// Per-example gradients of the VAE loss for one batch, with the batch-mean
/// loss. `noise` supplies the reparameterization draw, one row per example.
///
/// Each returned vector is the gradient of that example's own loss term;
/// averaging them reproduces the batch gradient.
pub fn vae_batch_gradients(
    model: &VaeModel,
    x: &Matrix,
    noise: &Matrix,
) -> Result<(Vec<Vec<f64>>, VaeLoss)> {
    if noise.shape() != (x.rows(), model.latent_dim) {
        return Err(Error::shape(
            "vae_batch_gradients",
            format!("{}x{} noise", x.rows(), model.latent_dim),
            format!("{}x{}", noise.rows(), noise.cols()),
        ));
    }
    let n = x.rows();
    let mut per_example = Vec::with_capacity(n);
    let mut recon_sum = 0.0;
    let mut kl_sum = 0.0;
    for i in 0..n {
        let xi = x.row_matrix(i);
        let eps = noise.row_matrix(i);

        let (h, trunk_caches) = model.trunk.forward(&xi)?;
        let (mu, mu_cache) = dense_forward(&model.mu_head, &h)?;
        let (logvar, lv_cache) = dense_forward(&model.logvar_head, &h)?;
        let std = logvar.map(|v| (0.5 * v).exp());
        let z = mu.add(&std.zip_map(&eps, |s, e| s * e)?)?;
        let (x_hat, dec_caches) = model.decoder.forward(&z)?;

        // Per-example loss terms (no batch averaging here).
        let mut recon = 0.0;
        for (a, b) in xi.data().iter().zip(x_hat.data()) {
            let d = b - a;
            recon += d * d;
        }
        let mut kl = 0.0;
        for (m, v) in mu.data().iter().zip(logvar.data()) {
            kl += -0.5 * (1.0 + v - m * m - v.exp());
        }
        recon_sum += recon;
        kl_sum += kl;

        // d recon / d x_hat = 2 (x_hat - x)
        let dxhat = x_hat.zip_map(&xi, |b, a| 2.0 * (b - a))?;
        let (dec_grads, dz) = model.decoder.backward(&dec_caches, &dxhat)?;

        // z = mu + std * eps with std = exp(logvar / 2):
        //   dz/dmu = 1, dz/dlogvar = eps * std / 2.
        // KL adds mu and (exp(logvar) - 1) / 2.
        let dmu = dz.zip_map(&mu, |g, m| g + m)?;
        let dlv = {
            let recon_part = dz.zip_map(&std, |g, s| g * 0.5 * s)?.zip_map(&eps, |g, e| g * e)?;
            recon_part.zip_map(&logvar, |g, v| g + 0.5 * (v.exp() - 1.0))?
        };

        let (dw_mu, db_mu, dh_mu) = dense_backward(&model.mu_head, &mu_cache, &dmu)?;
        let (dw_lv, db_lv, dh_lv) = dense_backward(&model.logvar_head, &lv_cache, &dlv)?;
        let dh = dh_mu.add(&dh_lv)?;
        let (trunk_grads, _) = model.trunk.backward(&trunk_caches, &dh)?;

        let mut flat = Vec::with_capacity(model.param_count());
        flatten_grads_into(&trunk_grads, &mut flat);
        flat.extend_from_slice(dw_mu.data());
        flat.extend_from_slice(&db_mu);
        flat.extend_from_slice(dw_lv.data());
        flat.extend_from_slice(&db_lv);
        flatten_grads_into(&dec_grads, &mut flat);
        per_example.push(flat);
    }
    let n_f = n as f64;
    let recon = recon_sum / n_f;
    let kl = (kl_sum / n_f).max(0.0);
    Ok((per_example, VaeLoss { total: recon + kl, recon, kl }))
}

/// Train a VAE on log-space profiles. Returns the model and a trace of
/// losses on a fixed evaluation slice (the last tenth of the rows),
/// evaluated at the posterior mean; entry 0 is the pre-training loss.
pub fn train_vae(
    data: &Matrix,
    arch: &VaeArch,
    cfg: &TrainConfig,
) -> Result<(VaeModel, Vec<VaeTracePoint>)> {
    cfg.validate()?;
    if data.rows() < cfg.batch_size {
        return Err(Error::usage(format!(
            "training data has {} rows, fewer than batch_size {}",
            data.rows(),
            cfg.batch_size
        )));
    }
    let root = RngStream::new(cfg.seed);
    let mut init_rng = root.substream("vae-init");
    let mut shuffle_rng = root.substream("vae-shuffle");
    let mut noise_rng = root.substream("vae-noise");
    let mut dp_rng = root.substream("vae-dp-noise");

    let mut model = VaeModel::new(data.cols(), arch, &mut init_rng);
    let mut opt = AdamState::new(model.param_count(), cfg.learning_rate);

    let eval_start = data.rows() - (data.rows() / 10).max(1);
    let eval_x = data.slice_rows(eval_start, data.rows());

    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    trace.push(eval_point(&model, &eval_x, 0)?);

    let n = data.rows();
    for epoch in 1..=cfg.epochs {
        let mut idx: Vec<usize> = (0..n).collect();
        shuffle_rng.shuffle(&mut idx);
        for batch_idx in idx.chunks(cfg.batch_size) {
            let xb = data.take_rows(batch_idx);
            let noise = gaussian_sample(&mut noise_rng, xb.rows(), model.latent_dim)?;
            let (per_example, loss) = vae_batch_gradients(&model, &xb, &noise)?;
            if !loss.total.is_finite() {
                return Err(Error::TrainingDiverged { model: "vae".to_string(), epoch });
            }
            let agg = if cfg.dp.enabled {
                dp_aggregate(&per_example, &cfg.dp, &mut dp_rng)?
            } else {
                mean_aggregate(&per_example)?
            };
            let mut params = model.flatten_params();
            adam_step(&mut opt, &mut params, &agg)?;
            model.load_flat_params(&params)?;
        }
        let point = eval_point(&model, &eval_x, epoch)?;
        if !point.total.is_finite() {
            return Err(Error::TrainingDiverged { model: "vae".to_string(), epoch });
        }
        trace.push(point);
    }
    Ok((model, trace))
}

fn eval_point(model: &VaeModel, eval_x: &Matrix, epoch: usize) -> Result<VaeTracePoint> {
    let (mu, logvar) = model.encode(eval_x)?;
    let x_hat = model.decode(&mu)?;
    let loss = vae_loss(eval_x, &x_hat, &mu, &logvar)?;
    Ok(VaeTracePoint { epoch, total: loss.total, recon: loss.recon, kl: loss.kl })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(seed: u64) -> VaeModel {
        let arch = VaeArch {
            encoder_hidden: vec![6],
            latent_dim: 3,
            decoder_hidden: vec![6],
            hidden_activation: Activation::Tanh,
        };
        VaeModel::new(4, &arch, &mut RngStream::new(seed))
    }

    #[test]
    fn encode_shapes() {
        let model = toy_model(1);
        let x = gaussian_sample(&mut RngStream::new(2), 5, 4).unwrap();
        let (mu, logvar) = model.encode(&x).unwrap();
        assert_eq!(mu.shape(), (5, 3));
        assert_eq!(logvar.shape(), (5, 3));
        assert!(mu.all_finite() && logvar.all_finite());
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let model = toy_model(1);
        let x = Matrix::zeros(2, 7);
        assert!(model.encode(&x).is_err());
    }

    #[test]
    fn encode_is_row_wise() {
        let model = toy_model(3);
        let row = gaussian_sample(&mut RngStream::new(4), 1, 4).unwrap();
        let dup = Matrix::from_rows(&[row.row(0).to_vec(), row.row(0).to_vec()]).unwrap();
        let (mu, logvar) = model.encode(&dup).unwrap();
        assert_eq!(mu.row(0), mu.row(1));
        assert_eq!(logvar.row(0), logvar.row(1));
    }

    #[test]
    fn reparameterize_deterministic_limit() {
        let mu = Matrix::from_vec(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let logvar = Matrix::from_vec(2, 2, vec![0.3, -1.0, 2.0, 0.0]).unwrap();
        let zero = Matrix::zeros(2, 2);
        assert_eq!(reparameterize(&mu, &logvar, &zero).unwrap(), mu);
    }

    #[test]
    fn reparameterize_unit_variance() {
        let mu = Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let logvar = Matrix::zeros(1, 3);
        let noise = Matrix::from_vec(1, 3, vec![0.5, -0.5, 2.0]).unwrap();
        let z = reparameterize(&mu, &logvar, &noise).unwrap();
        assert_eq!(z.data(), &[1.5, 1.5, 5.0]);
    }

    #[test]
    fn reparameterize_scalar_case() {
        // mu = 1, logvar = 2 ln 3 (std = 3), noise = 2 -> z = 7.
        let mu = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let logvar = Matrix::from_vec(1, 1, vec![2.0 * 3.0f64.ln()]).unwrap();
        let noise = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let z = reparameterize(&mu, &logvar, &noise).unwrap();
        assert!((z.get(0, 0) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn reparameterize_shape_mismatch() {
        let mu = Matrix::zeros(1, 2);
        let logvar = Matrix::zeros(1, 3);
        assert!(reparameterize(&mu, &logvar, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn loss_zero_at_perfect_reconstruction() {
        let x = Matrix::from_vec(2, 2, vec![1.0, 0.0, 2.0, 3.0]).unwrap();
        let loss = vae_loss(&x, &x, &Matrix::zeros(2, 2), &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(loss.total, 0.0);
        assert_eq!(loss.recon, 0.0);
        assert_eq!(loss.kl, 0.0);
    }

    #[test]
    fn kl_hand_evaluated() {
        // mu = 1, logvar = 0, one latent dim: kl = -1/2 (1 + 0 - 1 - 1) = 1/2.
        let x = Matrix::zeros(1, 1);
        let loss = vae_loss(
            &x,
            &x,
            &Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            &Matrix::zeros(1, 1),
        )
        .unwrap();
        assert!((loss.kl - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kl_invariant_under_row_permutation() {
        let mut rng = RngStream::new(9);
        let mu = gaussian_sample(&mut rng, 4, 3).unwrap();
        let logvar = gaussian_sample(&mut rng, 4, 3).unwrap();
        let x = gaussian_sample(&mut rng, 4, 2).unwrap();
        let loss = vae_loss(&x, &x, &mu, &logvar).unwrap();
        let perm = [2, 0, 3, 1];
        let loss_p = vae_loss(&x, &x, &mu.take_rows(&perm), &logvar.take_rows(&perm)).unwrap();
        assert!((loss.kl - loss_p.kl).abs() < 1e-12);
    }

    #[test]
    fn kl_non_negative_on_random_inputs() {
        let mut rng = RngStream::new(10);
        for _ in 0..50 {
            let mu = gaussian_sample(&mut rng, 3, 4).unwrap();
            let logvar = gaussian_sample(&mut rng, 3, 4).unwrap().scale(2.0);
            let x = Matrix::zeros(3, 1);
            let loss = vae_loss(&x, &x, &mu, &logvar).unwrap();
            assert!(loss.kl >= 0.0);
        }
    }

    #[test]
    fn zero_epochs_returns_initialized_model() {
        let data = gaussian_sample(&mut RngStream::new(1), 20, 4).unwrap().map(f64::abs);
        let arch = VaeArch { encoder_hidden: vec![6], latent_dim: 3, decoder_hidden: vec![6], ..VaeArch::default() };
        let cfg = TrainConfig { epochs: 0, batch_size: 5, seed: 7, ..TrainConfig::default() };
        let (trained, trace) = train_vae(&data, &arch, &cfg).unwrap();
        let fresh = VaeModel::new(4, &arch, &mut RngStream::new(7).substream("vae-init"));
        assert_eq!(trained.flatten_params(), fresh.flatten_params());
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let data = gaussian_sample(&mut RngStream::new(2), 30, 4).unwrap().map(f64::abs);
        let arch = VaeArch { encoder_hidden: vec![6], latent_dim: 3, decoder_hidden: vec![6], ..VaeArch::default() };
        let cfg = TrainConfig { epochs: 2, batch_size: 10, seed: 11, ..TrainConfig::default() };
        let (m1, t1) = train_vae(&data, &arch, &cfg).unwrap();
        let (m2, t2) = train_vae(&data, &arch, &cfg).unwrap();
        assert_eq!(m1.flatten_params(), m2.flatten_params());
        assert_eq!(t1, t2);
    }

    #[test]
    fn train_rejects_small_dataset() {
        let data = Matrix::zeros(3, 4);
        let cfg = TrainConfig { batch_size: 10, ..TrainConfig::default() };
        assert!(train_vae(&data, &VaeArch::default(), &cfg).is_err());
    }

    #[test]
    fn generate_from_data_pairs_rows_and_is_seed_sensitive() {
        let model = toy_model(5);
        let x = gaussian_sample(&mut RngStream::new(6), 7, 4).unwrap();
        let a = model.generate_from_data(&x, &mut RngStream::new(1)).unwrap();
        let b = model.generate_from_data(&x, &mut RngStream::new(2)).unwrap();
        assert_eq!(a.shape(), x.shape());
        assert_ne!(a, b, "different seeds must sample different latents");
        assert!(a.data().iter().all(|&v| v >= 0.0), "relu head output");
    }

    #[test]
    fn generate_from_noise_shape_and_determinism() {
        let model = toy_model(8);
        let a = model.generate_from_noise(9, &mut RngStream::new(3)).unwrap();
        let b = model.generate_from_noise(9, &mut RngStream::new(3)).unwrap();
        assert_eq!(a.shape(), (9, 4));
        assert_eq!(a, b);
        assert!(model.generate_from_noise(0, &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn zero_weight_decoder_is_constant() {
        let mut model = toy_model(12);
        let zero_params = vec![0.0; model.param_count()];
        model.load_flat_params(&zero_params).unwrap();
        let out = model.generate_from_noise(4, &mut RngStream::new(1)).unwrap();
        for i in 0..out.rows() {
            assert_eq!(out.row(i), out.row(0), "constant bias-path image");
        }
    }

    #[test]
    fn flat_param_roundtrip() {
        let model = toy_model(13);
        let flat = model.flatten_params();
        let mut copy = toy_model(14);
        copy.load_flat_params(&flat).unwrap();
        assert_eq!(copy.flatten_params(), flat);
    }
}
