//! Tiny convolutional networks: generators end in tanh, discriminators in a
//! spatial mean. Parameters live outside any graph and are bound as leaves
//! once per training step, so repeated forwards share gradient accumulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::graph::{AutodiffError, Graph, Shape, TensorId};
use crate::autodiff::scalar::Scalar;

pub const DEFAULT_WIDTH: usize = 16;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layer {
    Conv2d { in_ch: usize, out_ch: usize },
    LeakyRelu { slope: f64 },
    Tanh,
    Affine,
    SpatialMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Shape,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet<T> {
    layers: Vec<Layer>,
    params: Vec<Param<T>>,
}

impl<T: Scalar> TinyNet<T> {
    /// conv(in→width) → leaky → conv(width→width) → leaky → conv(width→out) → tanh.
    pub fn generator(in_ch: usize, out_ch: usize, width: usize, seed: u64) -> Self {
        let layers = vec![
            Layer::Conv2d { in_ch, out_ch: width },
            Layer::LeakyRelu { slope: LEAKY_SLOPE },
            Layer::Conv2d { in_ch: width, out_ch: width },
            Layer::LeakyRelu { slope: LEAKY_SLOPE },
            Layer::Conv2d { in_ch: width, out_ch },
            Layer::Tanh,
        ];
        Self::with_random_params(layers, seed)
    }

    /// conv(in→width) → leaky → conv(width→1) → spatial mean.
    pub fn discriminator(in_ch: usize, width: usize, seed: u64) -> Self {
        let layers = vec![
            Layer::Conv2d { in_ch, out_ch: width },
            Layer::LeakyRelu { slope: LEAKY_SLOPE },
            Layer::Conv2d { in_ch: width, out_ch: 1 },
            Layer::SpatialMean,
        ];
        Self::with_random_params(layers, seed)
    }

    /// Builds parameters for an arbitrary layer stack. Conv weights are
    /// uniform in ±1/√fan_in with zero biases; affine layers start as the
    /// identity.
    pub fn with_random_params(layers: Vec<Layer>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut conv_idx = 0usize;
        let mut affine_idx = 0usize;
        for layer in &layers {
            match layer {
                Layer::Conv2d { in_ch, out_ch } => {
                    let fan_in = in_ch * 9;
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let wshape = Shape::new(*out_ch, *in_ch, 3, 3);
                    let weights = (0..wshape.count())
                        .map(|_| T::from_f64(rng.random_range(-bound..bound)))
                        .collect();
                    params.push(Param {
                        name: format!("conv{conv_idx}.weight"),
                        shape: wshape,
                        values: weights,
                    });
                    params.push(Param {
                        name: format!("conv{conv_idx}.bias"),
                        shape: Shape::new(1, *out_ch, 1, 1),
                        values: vec![T::zero(); *out_ch],
                    });
                    conv_idx += 1;
                }
                Layer::Affine => {
                    params.push(Param {
                        name: format!("affine{affine_idx}.scale"),
                        shape: Shape::scalar(),
                        values: vec![T::one()],
                    });
                    params.push(Param {
                        name: format!("affine{affine_idx}.shift"),
                        shape: Shape::scalar(),
                        values: vec![T::zero()],
                    });
                    affine_idx += 1;
                }
                Layer::LeakyRelu { .. } | Layer::Tanh | Layer::SpatialMean => {}
            }
        }
        Self { layers, params }
    }

    /// Rebuilds a net from stored parameters; layer parameter shapes must
    /// already agree with the stack.
    pub fn from_params(layers: Vec<Layer>, params: Vec<Param<T>>) -> Self {
        Self { layers, params }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn input_channels(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Conv2d { in_ch, .. } => Some(*in_ch),
            _ => None,
        })
    }

    /// Registers every parameter as a leaf on `graph`. Forwards through the
    /// returned binding share those leaves, so gradients from multiple uses
    /// of the net accumulate onto the same ids.
    pub fn bind(&self, graph: &mut Graph<T>) -> Result<BoundNet, AutodiffError> {
        let mut ids = Vec::with_capacity(self.params.len());
        for p in &self.params {
            ids.push(graph.leaf(p.shape, p.values.clone())?);
        }
        Ok(BoundNet { param_ids: ids })
    }

    /// Applies a gradient-descent step to every parameter that received a
    /// gradient under `binding`.
    pub fn sgd_step(
        &mut self,
        binding: &BoundNet,
        grads: &crate::autodiff::graph::Gradients<T>,
        lr: T,
    ) {
        for (param, &id) in self.params.iter_mut().zip(&binding.param_ids) {
            if let Some(g) = grads.get(id) {
                for (p, &gi) in param.values.iter_mut().zip(g) {
                    *p = *p - lr * gi;
                }
            }
        }
    }
}

/// Per-graph leaf ids for one net's parameters.
#[derive(Debug, Clone)]
pub struct BoundNet {
    param_ids: Vec<TensorId>,
}

impl BoundNet {
    pub fn param_ids(&self) -> &[TensorId] {
        &self.param_ids
    }

    /// Runs the layer stack on `input`. Errors with `ShapeMismatch` when the
    /// input channel count does not match the first convolution.
    pub fn forward<T: Scalar>(
        &self,
        net: &TinyNet<T>,
        graph: &mut Graph<T>,
        input: TensorId,
    ) -> Result<TensorId, AutodiffError> {
        let mut x = input;
        let mut param_cursor = 0usize;
        for layer in &net.layers {
            match layer {
                Layer::Conv2d { .. } => {
                    let w = self.param_ids[param_cursor];
                    let b = self.param_ids[param_cursor + 1];
                    param_cursor += 2;
                    x = graph.conv2d(x, w, b)?;
                }
                Layer::LeakyRelu { slope } => {
                    x = graph.leaky_relu(x, T::from_f64(*slope))?;
                }
                Layer::Tanh => {
                    x = graph.tanh(x)?;
                }
                Layer::Affine => {
                    let s = self.param_ids[param_cursor];
                    let b = self.param_ids[param_cursor + 1];
                    param_cursor += 2;
                    x = graph.scale_shift(x, s, b)?;
                }
                Layer::SpatialMean => {
                    x = graph.spatial_mean(x)?;
                }
            }
        }
        Ok(x)
    }
}

/// One-shot inference without keeping the graph around.
pub fn forward_inference<T: Scalar>(
    net: &TinyNet<T>,
    shape: Shape,
    values: Vec<T>,
) -> Result<Vec<T>, AutodiffError> {
    let mut graph = Graph::new();
    let input = graph.leaf(shape, values)?;
    let binding = net.bind(&mut graph)?;
    let out = binding.forward(net, &mut graph, input)?;
    Ok(graph.values(out).to_vec())
}
