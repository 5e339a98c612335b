//! Dense layers with analytic gradients.
//!
//! A layer computes `y = activation(x W + b)` for a batch `x` of shape
//! (N, in_dim), with `W` stored (in_dim, out_dim) row-major. The backward
//! pass returns exact gradients of that map; there is no autodiff here,
//! every derivative is written out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{Matrix, RngStream};

/// Slope of the negative branch of leaky relu.
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z >= 0.0 {
                    z
                } else {
                    LEAKY_RELU_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative as a function of the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
        }
    }
}

/// Fully connected layer; weights are (in_dim, out_dim).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Forward-pass bookkeeping needed by the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Matrix,
    pub pre_activation: Matrix,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Xavier/Glorot uniform init; the default for tanh/sigmoid/identity.
    pub fn xavier(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Self::uniform(in_dim, out_dim, activation, limit, rng)
    }

    /// He uniform init; the default for relu-family activations.
    pub fn he(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        Self::uniform(in_dim, out_dim, activation, limit, rng)
    }

    pub fn uniform(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        limit: f64,
        rng: &mut RngStream,
    ) -> Self {
        let weights = Matrix::from_fn(in_dim, out_dim, |_, _| (2.0 * rng.next_uniform() - 1.0) * limit);
        DenseLayer { weights, bias: vec![0.0; out_dim], activation }
    }

    /// Init matched to the activation: He for relu-family, Xavier otherwise.
    pub fn for_activation(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut RngStream) -> Self {
        match activation {
            Activation::Relu | Activation::LeakyRelu => Self::he(in_dim, out_dim, activation, rng),
            _ => Self::xavier(in_dim, out_dim, activation, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.bias.len() != self.weights.cols() {
            return Err(Error::shape(
                "DenseLayer::validate",
                format!("bias of length {}", self.weights.cols()),
                format!("bias of length {}", self.bias.len()),
            ));
        }
        if self.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::usage("non-finite bias entry".to_string()));
        }
        Ok(())
    }
}

/// `y = activation(x W + b)` plus the cache for the backward pass.
pub fn dense_forward(layer: &DenseLayer, x: &Matrix) -> Result<(Matrix, LayerCache)> {
    if x.cols() != layer.in_dim() {
        return Err(Error::shape(
            "dense_forward",
            format!("input with {} columns", layer.in_dim()),
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    let pre = x.matmul(&layer.weights)?.add_row_vector(&layer.bias)?;
    let y = pre.map(|z| layer.activation.apply(z));
    let cache = LayerCache { input: x.clone(), pre_activation: pre };
    Ok((y, cache))
}

/// Exact gradients of `dense_forward` given the cotangent `dy` of its output.
///
/// Returns `(dW, db, dx)`.
pub fn dense_backward(
    layer: &DenseLayer,
    cache: &LayerCache,
    dy: &Matrix,
) -> Result<(Matrix, Vec<f64>, Matrix)> {
    cache.pre_activation.check_same_shape("dense_backward", dy)?;
    let dz = dy.zip_map(&cache.pre_activation, |g, z| g * layer.activation.derivative(z))?;
    dense_backward_from_preact(layer, cache, &dz)
}

/// Backward pass starting from the gradient w.r.t. the pre-activation.
///
/// Losses that fold the output non-linearity into their own gradient (the
/// sigmoid/cross-entropy pairing) start here and skip the activation
/// derivative.
pub fn dense_backward_from_preact(
    layer: &DenseLayer,
    cache: &LayerCache,
    dz: &Matrix,
) -> Result<(Matrix, Vec<f64>, Matrix)> {
    cache.pre_activation.check_same_shape("dense_backward_from_preact", dz)?;
    if cache.input.cols() != layer.in_dim() {
        return Err(Error::shape(
            "dense_backward_from_preact",
            format!("cached input with {} columns", layer.in_dim()),
            format!("{}x{}", cache.input.rows(), cache.input.cols()),
        ));
    }
    let d_weights = cache.input.transpose().matmul(dz)?;
    let d_bias = dz.col_sums();
    let dx = dz.matmul(&layer.weights.transpose())?;
    Ok((d_weights, d_bias, dx))
}
