use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layer::{self, shape_error, LayerSpec};
use crate::tensor::{Real, Tensor};

/// A sequential network over a static layer list.
///
/// Parameters are stored flat in layer order (weights, then bias, for each
/// parameterized layer). Every parameter mutation bumps `version`, which
/// invalidates outstanding [`ForwardCache`]s.
#[derive(Debug, Clone)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Tensor<T>>,
    slots: Vec<Range<usize>>,
    seed: u64,
    version: u64,
}

/// Activations recorded by [`Network::forward`], consumed by backward.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    activations: Vec<Tensor<T>>,
    version: u64,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.activations.last().expect("cache holds at least the input")
    }
}

/// Result of a backward pass: parameter gradients in the network's flat
/// layout, plus the gradient with respect to the network input.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: Vec<Tensor<T>>,
    pub input: Tensor<T>,
}

impl<T: Real> Network<T> {
    /// Builds the network, checking the shape chain and initializing weights
    /// with Glorot-uniform draws from `seed`; biases start at zero.
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.to_vec();
        for (i, spec) in layers.iter().enumerate() {
            current = spec.output_shape(&current).map_err(|m| shape_error(i, m))?;
            shapes.push(current.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut slots = Vec::with_capacity(layers.len());
        for spec in &layers {
            let start = params.len();
            let shapes = spec.param_shapes();
            if let Some((fan_in, fan_out)) = spec.fans() {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut w = Tensor::zeros(&shapes[0]);
                for v in w.data_mut() {
                    *v = T::from_f64((2.0 * rng.random::<f64>() - 1.0) * bound);
                }
                params.push(w);
                params.push(Tensor::zeros(&shapes[1]));
            }
            slots.push(start..params.len());
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            shapes,
            params,
            slots,
            seed,
            version: 0,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map(Vec::as_slice).unwrap_or(&self.input_shape)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    /// Mutable parameter access; invalidates existing forward caches.
    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        self.version += 1;
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.shape().len() != self.input_shape.len() + 1
            || input.shape()[1..] != self.input_shape[..]
        {
            return Err(shape_error(
                0,
                format!(
                    "input shape {:?} does not match [batch] + {:?}",
                    input.shape(),
                    self.input_shape
                ),
            ));
        }
        Ok(())
    }

    /// Forward pass that records activations for a later backward pass.
    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for (i, spec) in self.layers.iter().enumerate() {
            let x = activations.last().expect("non-empty");
            let y = layer::forward(spec, &self.shapes[i], &self.params[self.slots[i].clone()], x);
            activations.push(y);
        }
        let out = activations.last().expect("non-empty").clone();
        Ok((
            out,
            ForwardCache {
                activations,
                version: self.version,
            },
        ))
    }

    /// Forward pass without retaining activations.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for (i, spec) in self.layers.iter().enumerate() {
            x = layer::forward(spec, &self.shapes[i], &self.params[self.slots[i].clone()], &x);
        }
        Ok(x)
    }

    /// Full backward pass: parameter gradients (summed over the batch) and
    /// the input gradient.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_output: &Tensor<T>) -> Result<Gradients<T>> {
        self.backward_impl(cache, grad_output, true)
    }

    /// Backward pass that only propagates to the input, skipping parameter
    /// gradient accumulation.
    pub fn input_gradient(&self, cache: &ForwardCache<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.backward_impl(cache, grad_output, false)?.input)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache<T>,
        grad_output: &Tensor<T>,
        want_params: bool,
    ) -> Result<Gradients<T>> {
        if cache.version != self.version || cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::StaleCache {
                network: self.version,
                cache: cache.version,
            });
        }
        if grad_output.shape() != cache.output().shape() {
            return Err(shape_error(
                self.layers.len().saturating_sub(1),
                format!(
                    "output gradient shape {:?} differs from output shape {:?}",
                    grad_output.shape(),
                    cache.output().shape()
                ),
            ));
        }
        let mut param_grads: Vec<Tensor<T>> = if want_params {
            self.params.iter().map(|p| Tensor::zeros(p.shape())).collect()
        } else {
            Vec::new()
        };
        let mut g = grad_output.clone();
        for (i, spec) in self.layers.iter().enumerate().rev() {
            let slot = self.slots[i].clone();
            let grads = layer::backward(
                spec,
                &self.params[slot.clone()],
                &cache.activations[i],
                &cache.activations[i + 1],
                &g,
                want_params,
            );
            if want_params {
                for (dst, src) in param_grads[slot].iter_mut().zip(grads.params) {
                    *dst = src;
                }
            }
            g = grads.input;
        }
        Ok(Gradients {
            params: param_grads,
            input: g,
        })
    }

    /// Copy of this network with parameters converted to another scalar type.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            slots: self.slots.clone(),
            seed: self.seed,
            version: 0,
        }
    }

    /// Replaces all parameters, checking shapes.
    pub fn set_params(&mut self, params: Vec<Tensor<T>>) -> Result<()> {
        if params.len() != self.params.len()
            || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(shape_error(0, "parameter layout mismatch"));
        }
        self.params = params;
        self.version += 1;
        Ok(())
    }
}
