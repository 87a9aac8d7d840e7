//! Fully connected networks over a single flat parameter vector.
//!
//! Layer `l` maps `sizes[l]` inputs to `sizes[l + 1]` outputs. Its weights are
//! stored row-major as an `out x in` block immediately followed by `out`
//! biases; layers are concatenated in order. Batches are row-major
//! `batch x dim` slices.

use rand::Rng;

use crate::error::{LearnError, Result};
use crate::real::{gemm, MatRef, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }

    #[inline]
    fn apply<R: Real>(self, x: R) -> R {
        match self {
            Activation::Relu => {
                if x > R::ZERO {
                    x
                } else {
                    R::ZERO
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output<R: Real>(self, y: R) -> R {
        match self {
            Activation::Relu => {
                if y > R::ZERO {
                    R::ONE
                } else {
                    R::ZERO
                }
            }
            Activation::Tanh => R::ONE - y * y,
            Activation::Linear => R::ONE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<R: Real = f32> {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<R>,
}

/// Per-layer outputs of a forward pass, kept for [`DenseNet::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache<R: Real> {
    batch: usize,
    /// `values[0]` is the input, `values[l + 1]` the output of layer `l`.
    values: Vec<Vec<R>>,
}

impl<R: Real> ForwardCache<R> {
    pub fn output(&self) -> &[R] {
        self.values.last().expect("cache always holds the input")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Clone, Debug)]
pub struct Gradients<R: Real> {
    /// Same layout as [`DenseNet::params`].
    pub params: Vec<R>,
    /// `batch x input_dim`.
    pub input: Vec<R>,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<R: Real> DenseNet<R> {
    /// Uniform `±1/sqrt(fan_in)` initialization for weights and biases.
    pub fn new(sizes: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Result<Self> {
        Self::check_shape(sizes, activations)?;
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(R::from_f64(rng.random_range(-bound..bound)));
            }
        }
        Ok(Self { sizes: sizes.to_vec(), activations: activations.to_vec(), params })
    }

    pub fn from_params(sizes: &[usize], activations: &[Activation], params: Vec<R>) -> Result<Self> {
        Self::check_shape(sizes, activations)?;
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(LearnError::DimMismatch { context: "network parameters", expected, got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(LearnError::NonFinite("network parameters"));
        }
        Ok(Self { sizes: sizes.to_vec(), activations: activations.to_vec(), params })
    }

    /// Single linear layer computing the identity map.
    pub fn identity(dim: usize) -> Self {
        let mut params = vec![R::ZERO; dim * dim + dim];
        for i in 0..dim {
            params[i * dim + i] = R::ONE;
        }
        Self { sizes: vec![dim, dim], activations: vec![Activation::Linear], params }
    }

    fn check_shape(sizes: &[usize], activations: &[Activation]) -> Result<()> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(LearnError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(LearnError::DimMismatch {
                context: "activation count",
                expected: sizes.len() - 1,
                got: activations.len(),
            });
        }
        Ok(())
    }

    /// Multiplies the weights and biases of the last layer by `s`.
    pub fn scale_output_layer(&mut self, s: R) {
        let n = self.sizes.len();
        let last = self.sizes[n - 2] * self.sizes[n - 1] + self.sizes[n - 1];
        let total = self.params.len();
        for p in &mut self.params[total - last..] {
            *p = *p * s;
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[R] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [R] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Moves every parameter toward `online` by `tau * (online - self)`.
    pub fn soft_update_from(&mut self, online: &Self, tau: R) {
        debug_assert_eq!(self.sizes, online.sizes);
        for (t, &o) in self.params.iter_mut().zip(&online.params) {
            *t += tau * (o - *t);
        }
    }

    fn layer_views(&self, l: usize) -> (usize, usize, usize) {
        let offset: usize = self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (offset, self.sizes[l], self.sizes[l + 1])
    }

    fn check_input(&self, input: &[R], batch: usize) -> Result<()> {
        let expected = batch * self.input_dim();
        if input.len() != expected {
            return Err(LearnError::DimMismatch { context: "network input", expected, got: input.len() });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[R], batch: usize) -> Result<Vec<R>> {
        Ok(self.forward_cached(input, batch)?.values.pop().unwrap())
    }

    pub fn forward_cached(&self, input: &[R], batch: usize) -> Result<ForwardCache<R>> {
        self.check_input(input, batch)?;
        let mut values = Vec::with_capacity(self.sizes.len());
        values.push(input.to_vec());
        for l in 0..self.activations.len() {
            let (off, fan_in, fan_out) = self.layer_views(l);
            let w = &self.params[off..off + fan_out * fan_in];
            let b = &self.params[off + fan_out * fan_in..off + fan_out * fan_in + fan_out];
            let x = values.last().unwrap();
            let mut z = vec![R::ZERO; batch * fan_out];
            gemm(MatRef::new(x, batch, fan_in), MatRef::new(w, fan_out, fan_in).t(), R::ZERO, &mut z);
            let act = self.activations[l];
            for row in z.chunks_exact_mut(fan_out) {
                for (v, &bias) in row.iter_mut().zip(b) {
                    *v = act.apply(*v + bias);
                }
            }
            values.push(z);
        }
        Ok(ForwardCache { batch, values })
    }

    /// Gradients of `sum(grad_output * output)` with respect to every
    /// parameter and to the input.
    pub fn backward(&self, cache: &ForwardCache<R>, grad_output: &[R]) -> Result<Gradients<R>> {
        let batch = cache.batch;
        let expected = batch * self.output_dim();
        if grad_output.len() != expected {
            return Err(LearnError::DimMismatch { context: "upstream gradient", expected, got: grad_output.len() });
        }
        let mut grads = vec![R::ZERO; self.params.len()];
        let mut upstream = grad_output.to_vec();
        for l in (0..self.activations.len()).rev() {
            let (off, fan_in, fan_out) = self.layer_views(l);
            let act = self.activations[l];
            let y = &cache.values[l + 1];
            for (g, &yv) in upstream.iter_mut().zip(y) {
                *g *= act.derivative_from_output(yv);
            }
            let x = &cache.values[l];
            let (gw, rest) = grads[off..].split_at_mut(fan_out * fan_in);
            gemm(MatRef::new(&upstream, batch, fan_out).t(), MatRef::new(x, batch, fan_in), R::ZERO, gw);
            let gb = &mut rest[..fan_out];
            for row in upstream.chunks_exact(fan_out) {
                for (acc, &g) in gb.iter_mut().zip(row) {
                    *acc += g;
                }
            }
            let w = &self.params[off..off + fan_out * fan_in];
            let mut down = vec![R::ZERO; batch * fan_in];
            gemm(MatRef::new(&upstream, batch, fan_out), MatRef::new(w, fan_out, fan_in), R::ZERO, &mut down);
            upstream = down;
        }
        Ok(Gradients { params: grads, input: upstream })
    }
}
