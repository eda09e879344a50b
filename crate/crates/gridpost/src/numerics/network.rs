//! Sequential network: a layer stack with shared shape bookkeeping, a cached
//! forward trace and reverse-mode backward over every trainable parameter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Cache, Layer, LayerSpec};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Network<S> {
    layers: Vec<Layer<S>>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

/// Forward pass record: `activations[0]` is the input, `activations[i+1]`
/// the output of layer `i`.
pub struct Trace<S> {
    pub activations: Vec<Tensor<S>>,
    caches: Vec<Cache>,
}

impl<S> Trace<S> {
    pub fn output(&self) -> &Tensor<S> {
        self.activations.last().expect("trace is never empty")
    }
}

/// Parameter gradients grouped per layer, aligned with [`Network::params`].
pub struct Gradients<S> {
    pub per_layer: Vec<Vec<Tensor<S>>>,
    pub grad_input: Tensor<S>,
}

impl<S: Scalar> Gradients<S> {
    /// Flattens to the same order as [`Network::params`].
    pub fn flat(&self) -> Vec<&Tensor<S>> {
        self.per_layer.iter().flatten().collect()
    }
}

impl<S: Scalar> Network<S> {
    /// Builds the stack from specs, resolving shapes layer by layer; fails
    /// with the index of the first layer whose geometry does not close.
    pub fn build(specs: &[LayerSpec], in_shape: Vec<usize>, rng: &mut impl Rng) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = in_shape.clone();
        for (i, spec) in specs.iter().enumerate() {
            let (layer, out_shape) = Layer::build(spec, &shape, rng)
                .map_err(|e| Error::config(format!("layer {i}: {e}")))?;
            layers.push(layer);
            shape = out_shape;
        }
        Ok(Network {
            layers,
            in_shape,
            out_shape: shape,
        })
    }

    pub fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }

    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn params(&self) -> Vec<&Tensor<S>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, input: &Tensor<S>) -> Result<()> {
        if input.rank() != self.in_shape.len() + 1 || input.shape()[1..] != self.in_shape[..] {
            return Err(Error::shape(format!(
                "network expects batched input (B,{:?}), got {:?}",
                self.in_shape,
                input.shape()
            )));
        }
        Ok(())
    }

    /// Plain batched forward without trace bookkeeping.
    pub fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?.0;
        }
        Ok(x)
    }

    /// Forward pass retaining every intermediate activation; rejects
    /// non-finite activations with the offending layer index.
    pub fn forward_trace(&self, input: &Tensor<S>) -> Result<Trace<S>> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let (out, cache) = layer.forward(activations.last().unwrap())?;
            if !out.all_finite() {
                return Err(Error::numeric(format!("non-finite activation in layer {i}")));
            }
            activations.push(out);
            caches.push(cache);
        }
        Ok(Trace { activations, caches })
    }

    /// Hash of the piecewise-linear region the forward pass landed in: the
    /// sign pattern of every relu activation plus every max-pool argmax
    /// selection. Two evaluations with equal signatures lie in the same
    /// smooth region, so central differences across them are valid.
    pub fn kink_signature(&self, trace: &Trace<S>) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.has_relu() {
                for v in trace.activations[i + 1].data() {
                    hash ^= u64::from(*v > S::zero());
                    hash = hash.wrapping_mul(PRIME);
                }
            }
            if let Cache::PoolArgmax(argmax) = &trace.caches[i] {
                for idx in argmax {
                    hash ^= u64::from(*idx);
                    hash = hash.wrapping_mul(PRIME);
                }
            }
        }
        hash
    }

    /// Reverse-mode pass: gradients of a scalar loss with respect to every
    /// trainable parameter, given `d loss / d output`.
    pub fn backward(&self, trace: &Trace<S>, grad_out: &Tensor<S>) -> Result<Gradients<S>> {
        let mut per_layer = vec![Vec::new(); self.layers.len()];
        let mut grad = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (gx, gp) = layer
                .backward(&trace.activations[i], &trace.activations[i + 1], &trace.caches[i], &grad)
                .map_err(|e| Error::numeric(format!("backward through layer {i}: {e}")))?;
            per_layer[i] = gp;
            grad = gx;
        }
        Ok(Gradients {
            per_layer,
            grad_input: grad,
        })
    }
}
