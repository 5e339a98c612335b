//! Parameter-update rules: SGD, Adam, and differentially private
//! aggregation with per-example clipping and Gaussian noise.
//!
//! Optimizers operate on flat `f64` slices. Networks flatten their
//! parameters into a canonical order (layer by layer, weights row-major,
//! then bias), update the flat vector, and load it back. Gradient
//! aggregation is a sequential fold in example order so the non-private
//! mean and the private path with sigma = 0, C = +inf produce bit-identical
//! results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::RngStream;

/// Plain gradient-descent update: `p -= lr * g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], learning_rate: f64) -> Result<()> {
    check_lengths("sgd_step", params.len(), grads.len())?;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= learning_rate * g;
    }
    Ok(())
}

/// Adam state: exponential moment estimates plus the step counter used for
/// bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with the usual defaults beta1 = 0.9, beta2 = 0.999,
    /// epsilon = 1e-8.
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self::with_betas(param_count, learning_rate, 0.9, 0.999)
    }

    pub fn with_betas(param_count: usize, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        assert!((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2));
        AdamState {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step_count: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One Adam update with bias correction.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    check_lengths("adam_step", params.len(), grads.len())?;
    check_lengths("adam_step moments", params.len(), state.first_moment.len())?;
    state.step_count += 1;
    let t = state.step_count as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        let v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bias1;
        let v_hat = v / bias2;
        params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Which networks a DP-enabled training run perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpTarget {
    /// Only the discriminator/critic of an adversarial pair. Single-network
    /// models (the VAE) treat their one update as in scope.
    CriticOnly,
    /// Every trained network, including GAN generators.
    AllNetworks,
}

/// Differential-privacy knobs: per-example clip bound C and noise
/// multiplier sigma (noise std = sigma * C).
///
/// No privacy accounting happens here; these are raw mechanism knobs and
/// the defaults C = 1, sigma = 1 are arbitrary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub enabled: bool,
    pub apply_to: DpTarget,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            clip_norm: 1.0,
            noise_multiplier: 1.0,
            enabled: false,
            apply_to: DpTarget::CriticOnly,
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if !(self.clip_norm > 0.0) {
            issues.push(format!("clip_norm must be > 0 (got {})", self.clip_norm));
        }
        if !(self.noise_multiplier >= 0.0) {
            issues.push(format!(
                "noise_multiplier must be >= 0 (got {})",
                self.noise_multiplier
            ));
        }
        if self.noise_multiplier > 0.0 && self.clip_norm.is_infinite() {
            issues.push("noise_multiplier > 0 with infinite clip_norm gives unbounded noise".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(issues))
        }
    }
}

/// Clip each example's gradient to global L2 norm <= C, sum, add Gaussian
/// noise with std sigma * C per coordinate, and divide by the batch size.
///
/// The noise loop is skipped entirely when sigma = 0 so that degenerate
/// configurations consume no randomness.
pub fn dp_aggregate(
    per_example_grads: &[Vec<f64>],
    cfg: &DpConfig,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if !cfg.enabled {
        return Err(Error::usage("dp_aggregate called with dp disabled"));
    }
    cfg.validate()?;
    let mut sum = clipped_sum(per_example_grads, Some(cfg.clip_norm))?;
    if cfg.noise_multiplier > 0.0 {
        let std = cfg.noise_multiplier * cfg.clip_norm;
        for v in sum.iter_mut() {
            *v += std * rng.next_normal();
        }
    }
    let n = per_example_grads.len() as f64;
    for v in sum.iter_mut() {
        *v /= n;
    }
    Ok(sum)
}

/// Mini-batch mean gradient computed with the same fold order as
/// `dp_aggregate`: sum in example order, then divide once.
pub fn mean_aggregate(per_example_grads: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut sum = clipped_sum(per_example_grads, None)?;
    let n = per_example_grads.len() as f64;
    for v in sum.iter_mut() {
        *v /= n;
    }
    Ok(sum)
}

fn clipped_sum(per_example_grads: &[Vec<f64>], clip: Option<f64>) -> Result<Vec<f64>> {
    let first = per_example_grads
        .first()
        .ok_or_else(|| Error::usage("gradient aggregation over an empty batch"))?;
    let mut sum = vec![0.0; first.len()];
    for g in per_example_grads {
        check_lengths("gradient aggregation", first.len(), g.len())?;
        let scale = match clip {
            Some(c) => {
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                (c / norm).min(1.0)
            }
            None => 1.0,
        };
        for (s, v) in sum.iter_mut().zip(g) {
            *s += scale * v;
        }
    }
    Ok(sum)
}

/// Global L2 norm of a flat gradient, exposed for tests and invariants.
pub fn global_norm(grad: &[f64]) -> f64 {
    grad.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_lengths(context: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::shape(
            context,
            format!("{expected} parameters"),
            format!("{actual} parameters"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_zero_gradient_is_identity() {
        let mut p = vec![1.5, -2.0];
        sgd_step(&mut p, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn sgd_scalar_arithmetic() {
        let mut p = vec![1.0];
        sgd_step(&mut p, &[2.0], 0.1).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_two_steps_equal_summed_step() {
        let mut a = vec![1.0, -0.5];
        sgd_step(&mut a, &[0.3, 0.7], 0.05).unwrap();
        sgd_step(&mut a, &[-0.1, 0.2], 0.05).unwrap();
        let mut b = vec![1.0, -0.5];
        sgd_step(&mut b, &[0.2, 0.9], 0.05).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_shape_mismatch() {
        let mut p = vec![0.0; 3];
        assert!(sgd_step(&mut p, &[0.0; 2], 0.1).is_err());
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut state = AdamState::new(3, 0.01);
        let mut p = vec![0.4, -0.2, 7.0];
        let before = p.clone();
        adam_step(&mut state, &mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, before);
        assert!(state.first_moment.iter().all(|&m| m == 0.0));
        assert!(state.second_moment.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_first_step_hand_evaluation() {
        // At t = 1 both bias-corrected moments equal the raw gradient, so
        // the step is lr * g / (|g| + eps) = 0.001 / (1 + 1e-8).
        let mut state = AdamState::new(1, 0.001);
        let mut p = vec![0.0];
        adam_step(&mut state, &mut p, &[1.0]).unwrap();
        assert!((p[0] + 0.001).abs() < 1e-10, "param {}", p[0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_moves_against_gradient_sign() {
        let mut rng = RngStream::new(17);
        for _ in 0..20 {
            let grads: Vec<f64> = (0..6).map(|_| rng.next_normal()).collect();
            let mut state = AdamState::new(6, 0.01);
            let mut p = vec![0.0; 6];
            adam_step(&mut state, &mut p, &grads).unwrap();
            for (v, g) in p.iter().zip(&grads) {
                if *g != 0.0 {
                    assert!(v * g < 0.0, "param {v} grad {g}");
                }
            }
        }
    }

    fn dp(clip: f64, sigma: f64) -> DpConfig {
        DpConfig { clip_norm: clip, noise_multiplier: sigma, enabled: true, apply_to: DpTarget::CriticOnly }
    }

    #[test]
    fn dp_clips_oversized_single_example() {
        // One example with norm 10 and C = 1: output is g / 10.
        let g = vec![6.0, 8.0]; // norm 10
        let out = dp_aggregate(&[g.clone()], &dp(1.0, 0.0), &mut RngStream::new(0)).unwrap();
        for (o, v) in out.iter().zip(&g) {
            assert!((o - v / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dp_leaves_small_example_unchanged() {
        let g = vec![0.3, 0.4]; // norm 0.5 under C = 1
        let out = dp_aggregate(&[g.clone()], &dp(1.0, 0.0), &mut RngStream::new(0)).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn dp_matches_straight_line_oracle() {
        // Independent oracle: clip each example, then plain average.
        let mut rng = RngStream::new(99);
        let batch: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..5).map(|_| 3.0 * rng.next_normal()).collect())
            .collect();
        let c = 1.0;
        let mut oracle = vec![0.0; 5];
        for g in &batch {
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if norm > c { c / norm } else { 1.0 };
            for (o, v) in oracle.iter_mut().zip(g) {
                *o += scale * v / batch.len() as f64;
            }
        }
        let out = dp_aggregate(&batch, &dp(c, 0.0), &mut RngStream::new(0)).unwrap();
        for (a, b) in out.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn dp_degenerates_to_mean_with_infinite_clip() {
        let mut rng = RngStream::new(7);
        let batch: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| 10.0 * rng.next_normal()).collect())
            .collect();
        let out = dp_aggregate(&batch, &dp(f64::INFINITY, 0.0), &mut RngStream::new(0)).unwrap();
        let mean = mean_aggregate(&batch).unwrap();
        assert_eq!(out, mean, "sigma=0, C=inf must be bit-identical to the mean");
    }

    #[test]
    fn dp_clipping_bound_holds() {
        let mut rng = RngStream::new(5);
        let cfg = dp(0.7, 0.0);
        for _ in 0..200 {
            let g: Vec<f64> = (0..10).map(|_| 5.0 * rng.next_normal()).collect();
            let norm = global_norm(&g);
            let scale = (cfg.clip_norm / norm).min(1.0);
            let clipped: Vec<f64> = g.iter().map(|v| scale * v).collect();
            assert!(global_norm(&clipped) <= cfg.clip_norm + 1e-12);
        }
    }

    #[test]
    fn dp_empty_batch_is_usage_error() {
        let out = dp_aggregate(&[], &dp(1.0, 0.0), &mut RngStream::new(0));
        assert!(matches!(out, Err(Error::Usage(_))));
    }

    #[test]
    fn dp_noise_is_seeded() {
        let batch = vec![vec![0.0; 4]];
        let a = dp_aggregate(&batch, &dp(1.0, 1.0), &mut RngStream::new(3)).unwrap();
        let b = dp_aggregate(&batch, &dp(1.0, 1.0), &mut RngStream::new(3)).unwrap();
        let c = dp_aggregate(&batch, &dp(1.0, 1.0), &mut RngStream::new(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dp_rejects_noise_with_infinite_clip() {
        let cfg = dp(f64::INFINITY, 1.0);
        assert!(dp_aggregate(&[vec![1.0]], &cfg, &mut RngStream::new(0)).is_err());
    }
}
