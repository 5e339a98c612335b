//! Numeric substrate: dense matrices, layers with analytic gradients, and
//! seeded random streams.

mod layer;
mod matrix;
mod rng;

pub use layer::{
    dense_backward, dense_backward_from_preact, dense_forward, Activation, DenseLayer, LayerCache,
    LEAKY_RELU_SLOPE,
};
pub use matrix::Matrix;
pub use rng::{gaussian_sample, RngStream};
