//! Stacks of dense layers with flat parameter views.
//!
//! Networks flatten their parameters into a single `Vec<f64>` in a fixed
//! order (layer by layer, weights row-major, then bias) so the optimizers
//! and the DP aggregation can treat every model as one parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{
    dense_backward, dense_backward_from_preact, dense_forward, Activation, DenseLayer, LayerCache,
    Matrix, RngStream,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

/// Gradients for one layer, shaped like the layer itself.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Self {
        assert!(!layers.is_empty());
        Mlp { layers }
    }

    /// Build from a dimension chain, e.g. `[26, 64, 32]`, with `hidden`
    /// activation everywhere except the final layer which uses `output`.
    pub fn from_dims(dims: &[usize], hidden: Activation, output: Activation, rng: &mut RngStream) -> Self {
        assert!(dims.len() >= 2);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let act = if layers.len() == dims.len() - 2 { output } else { hidden };
            layers.push(DenseLayer::for_activation(w[0], w[1], act, rng));
        }
        Mlp { layers }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Vec<LayerCache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (y, cache) = dense_forward(layer, &cur)?;
            caches.push(cache);
            cur = y;
        }
        Ok((cur, caches))
    }

    /// Backward pass from the cotangent of the network output.
    pub fn backward(&self, caches: &[LayerCache], dy: &Matrix) -> Result<(Vec<LayerGrads>, Matrix)> {
        self.backward_impl(caches, dy, false)
    }

    /// Backward pass from the gradient w.r.t. the final pre-activation,
    /// skipping the output activation's derivative.
    pub fn backward_from_preact(
        &self,
        caches: &[LayerCache],
        dz_last: &Matrix,
    ) -> Result<(Vec<LayerGrads>, Matrix)> {
        self.backward_impl(caches, dz_last, true)
    }

    fn backward_impl(
        &self,
        caches: &[LayerCache],
        dy: &Matrix,
        from_preact: bool,
    ) -> Result<(Vec<LayerGrads>, Matrix)> {
        if caches.len() != self.layers.len() {
            return Err(Error::shape(
                "Mlp::backward",
                format!("{} caches", self.layers.len()),
                format!("{} caches", caches.len()),
            ));
        }
        let mut grads_rev = Vec::with_capacity(self.layers.len());
        let mut cotangent = dy.clone();
        for (idx, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let last = idx == self.layers.len() - 1;
            let (dw, db, dx) = if last && from_preact {
                dense_backward_from_preact(layer, cache, &cotangent)?
            } else {
                dense_backward(layer, cache, &cotangent)?
            };
            grads_rev.push(LayerGrads { weights: dw, bias: db });
            cotangent = dx;
        }
        grads_rev.reverse();
        Ok((grads_rev, cotangent))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn flatten_params_into(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(&layer.bias);
        }
    }

    pub fn load_params(&mut self, src: &[f64], cursor: &mut usize) -> Result<()> {
        for layer in &mut self.layers {
            let w_len = layer.weights.data().len();
            let b_len = layer.bias.len();
            if *cursor + w_len + b_len > src.len() {
                return Err(Error::shape(
                    "Mlp::load_params",
                    format!("at least {} parameters", *cursor + w_len + b_len),
                    format!("{} parameters", src.len()),
                ));
            }
            layer.weights.data_mut().copy_from_slice(&src[*cursor..*cursor + w_len]);
            *cursor += w_len;
            layer.bias.copy_from_slice(&src[*cursor..*cursor + b_len]);
            *cursor += b_len;
        }
        Ok(())
    }

    /// Clamp every weight and bias into `[-limit, limit]`.
    pub fn clamp_params(&mut self, limit: f64) {
        for layer in &mut self.layers {
            for w in layer.weights.data_mut() {
                *w = w.clamp(-limit, limit);
            }
            for b in &mut layer.bias {
                *b = b.clamp(-limit, limit);
            }
        }
    }

    pub fn max_abs_param(&self) -> f64 {
        let mut m: f64 = 0.0;
        for layer in &self.layers {
            for w in layer.weights.data() {
                m = m.max(w.abs());
            }
            for b in &layer.bias {
                m = m.max(b.abs());
            }
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::usage("empty network".to_string()));
        }
        for w in self.layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::shape(
                    "Mlp::validate",
                    format!("layer input of {}", w[0].out_dim()),
                    format!("{}", w[1].in_dim()),
                ));
            }
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        Ok(())
    }
}

/// Append layer gradients to a flat buffer in the canonical order.
pub fn flatten_grads_into(grads: &[LayerGrads], out: &mut Vec<f64>) {
    for g in grads {
        out.extend_from_slice(g.weights.data());
        out.extend_from_slice(&g.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_load_roundtrip() {
        let mut rng = RngStream::new(1);
        let mlp = Mlp::from_dims(&[3, 5, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let mut flat = Vec::new();
        mlp.flatten_params_into(&mut flat);
        assert_eq!(flat.len(), mlp.param_count());

        let mut copy = Mlp::from_dims(&[3, 5, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let mut cursor = 0;
        copy.load_params(&flat, &mut cursor).unwrap();
        assert_eq!(cursor, flat.len());
        assert_eq!(copy, mlp);
    }

    #[test]
    fn forward_backward_shapes_roundtrip() {
        let mut rng = RngStream::new(2);
        for in_dim in 1..=8 {
            for out_dim in 1..=8 {
                let mlp = Mlp::from_dims(&[in_dim, 4, out_dim], Activation::Tanh, Activation::Identity, &mut rng);
                let x = crate::num::gaussian_sample(&mut rng, 3, in_dim).unwrap();
                let (y, caches) = mlp.forward(&x).unwrap();
                assert_eq!(y.shape(), (3, out_dim));
                let dy = crate::num::gaussian_sample(&mut rng, 3, out_dim).unwrap();
                let (grads, dx) = mlp.backward(&caches, &dy).unwrap();
                assert_eq!(dx.shape(), x.shape());
                assert_eq!(grads.len(), 2);
                assert_eq!(grads[0].weights.shape(), (in_dim, 4));
            }
        }
    }

    #[test]
    fn clamp_bounds_all_params() {
        let mut rng = RngStream::new(3);
        let mut mlp = Mlp::from_dims(&[4, 6, 1], Activation::LeakyRelu, Activation::Identity, &mut rng);
        mlp.clamp_params(0.01);
        assert!(mlp.max_abs_param() <= 0.01);
    }
}
