//! Small dense networks: affine layers with optional layer normalization and
//! ReLU, batched forward/backward passes, and an Adam optimizer.
//!
//! All arithmetic is `f64`. A layer computes `act(norm(W x + b))`, where the
//! normalization step is present only on layers built with a layer-norm flag.

mod adam;
mod io;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::Tape;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Variance floor used inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn tag(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Per-unit gain and offset applied after normalizing a layer's pre-activations.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub offset: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// Row-major `(out, in)` matrix.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub norm: Option<LayerNorm>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Parameters of a feed-forward network. Also used as the storage type for
/// gradients and optimizer moments, which share its shape.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    layers: Vec<Layer>,
}

impl NetworkParams {
    /// Builds a network with ReLU hidden layers and an identity output layer.
    ///
    /// `layernorm[i]` controls whether layer `i` (mapping `sizes[i]` to
    /// `sizes[i + 1]`) normalizes its pre-activations. Weights are drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; biases and offsets start at zero
    /// and gains at one.
    pub fn init(sizes: &[usize], layernorm: &[bool], seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArchitecture(format!(
                "need at least two layer sizes, got {sizes:?}"
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "layer sizes must be positive, got {sizes:?}"
            )));
        }
        let n_layers = sizes.len() - 1;
        if layernorm.len() != n_layers {
            return Err(Error::InvalidArchitecture(format!(
                "expected {n_layers} layer-norm flags, got {}",
                layernorm.len()
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
                let norm = layernorm[i].then(|| LayerNorm {
                    gain: Array1::ones(fan_out),
                    offset: Array1::zeros(fan_out),
                });
                let activation = if i + 1 == n_layers {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    norm,
                    activation,
                }
            })
            .collect();
        Ok(NetworkParams { layers })
    }

    /// Wraps explicit layers after checking that dimensions chain and every
    /// entry is finite.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArchitecture("no layers".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(Error::InvalidArchitecture(format!("layer {i} has a zero dimension")));
            }
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias length {} != out dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if let Some(norm) = &layer.norm {
                if norm.gain.len() != layer.out_dim() || norm.offset.len() != layer.out_dim() {
                    return Err(Error::Shape(format!("layer {i}: layer-norm size mismatch")));
                }
            }
            if i > 0 && layers[i - 1].out_dim() != layer.in_dim() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} values but layer {i} expects {}",
                    i - 1,
                    layers[i - 1].out_dim(),
                    layer.in_dim()
                )));
            }
        }
        let params = NetworkParams { layers };
        if !params.is_finite() {
            return Err(Error::numeric("network construction"));
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn layernorm_flags(&self) -> Vec<bool> {
        self.layers.iter().map(|l| l.norm.is_some()).collect()
    }

    /// A network of the same shape with every parameter set to zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Parameter tensors in a fixed order: per layer weights, bias, then
    /// gain and offset when normalized.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for layer in &self.layers {
            out.push(layer.weights.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
            if let Some(norm) = &layer.norm {
                out.push(norm.gain.as_slice().expect("standard layout"));
                out.push(norm.offset.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for layer in &mut self.layers {
            out.push(layer.weights.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
            if let Some(norm) = &mut layer.norm {
                out.push(norm.gain.as_slice_mut().expect("standard layout"));
                out.push(norm.offset.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, network has {}",
                values.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// True when both networks have identical layer shapes and flags.
    pub fn same_shape(&self, other: &NetworkParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.dim() == b.weights.dim()
                    && a.norm.is_some() == b.norm.is_some()
                    && a.activation == b.activation
            })
    }

    /// In-place `self += scale * other`.
    pub fn add_scaled(&mut self, other: &NetworkParams, scale: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape("add_scaled on incongruent networks".into()));
        }
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Euclidean norm over all parameters.
    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Evaluates the network on one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward_batch(&x)?.into_raw_vec_and_offset().0)
    }

    /// Evaluates the network on a `(batch, in)` matrix.
    pub fn forward_batch(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        tape::forward_only(self, input)
    }

    /// Records a forward pass for a subsequent backward pass.
    pub fn tape(&self, input: &Array2<f64>) -> Result<Tape<'_>> {
        Tape::record(self, input)
    }

    /// Gradient of `upstream . forward(input)` with respect to the parameters.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<Gradient> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        let u = Array2::from_shape_vec((1, upstream.len()), upstream.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        self.tape(&x)?.backward(&u)
    }

    /// Copies of the parameters with `tau`-weighted movement toward `online`:
    /// `self + tau * (online - self)`.
    pub fn polyak_toward(&self, online: &NetworkParams, tau: f64) -> Result<NetworkParams> {
        if !self.same_shape(online) {
            return Err(Error::Shape("polyak update on incongruent networks".into()));
        }
        let mut out = self.clone();
        for (dst, src) in out.tensors_mut().into_iter().zip(online.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += tau * (s - *d);
            }
        }
        Ok(out)
    }
}

/// Parameter gradient, shape-congruent with the network it was taken from.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient(NetworkParams);

impl Gradient {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Gradient(params.zeros_like())
    }

    pub fn as_params(&self) -> &NetworkParams {
        &self.0
    }

    pub fn into_params(self) -> NetworkParams {
        self.0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.to_flat()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.scale(factor);
    }

    /// In-place `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) -> Result<()> {
        self.0.add_scaled(&other.0, scale)
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_is_deterministic() {
        let a = NetworkParams::init(&[2, 1], &[false], 7).unwrap();
        let b = NetworkParams::init(&[2, 1], &[false], 7).unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
        let c = NetworkParams::init(&[2, 1], &[false], 8).unwrap();
        assert_ne!(a.to_flat(), c.to_flat());
    }

    #[test]
    fn param_count_with_layernorm() {
        let p = NetworkParams::init(&[3, 64, 1], &[true, false], 0).unwrap();
        assert_eq!(p.param_count(), 3 * 64 + 64 + 64 + 64 + 64 + 1);
        assert_eq!(p.param_count(), 449);
    }

    #[test]
    fn degenerate_architectures_rejected() {
        assert!(matches!(
            NetworkParams::init(&[2], &[], 0),
            Err(Error::InvalidArchitecture(_))
        ));
        assert!(matches!(
            NetworkParams::init(&[], &[], 0),
            Err(Error::InvalidArchitecture(_))
        ));
        assert!(matches!(
            NetworkParams::init(&[2, 0, 1], &[false, false], 0),
            Err(Error::InvalidArchitecture(_))
        ));
    }

    #[test]
    fn init_scale_and_defaults() {
        let p = NetworkParams::init(&[16, 8, 1], &[true, false], 3).unwrap();
        let bound = 1.0 / 4.0;
        assert!(p.layers()[0].weights.iter().all(|w| w.abs() <= bound));
        assert!(p.layers()[0].bias.iter().all(|b| *b == 0.0));
        let norm = p.layers()[0].norm.as_ref().unwrap();
        assert!(norm.gain.iter().all(|g| *g == 1.0));
        assert!(norm.offset.iter().all(|o| *o == 0.0));
        assert_eq!(p.layers()[0].activation, Activation::Relu);
        assert_eq!(p.layers()[1].activation, Activation::Identity);
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut p = NetworkParams::init(&[3, 2], &[false], 1).unwrap();
        p.layers_mut()[0].weights.fill(0.0);
        p.layers_mut()[0].bias = array![0.25, -1.5];
        for input in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0], [100.0, 5.0, -7.0]] {
            assert_eq!(p.forward(&input).unwrap(), vec![0.25, -1.5]);
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let p = NetworkParams::from_layers(vec![Layer {
            weights: array![[1.0, 0.0], [0.0, 1.0]],
            bias: array![0.0, 0.0],
            norm: None,
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(p.forward(&[3.0, -2.0]).unwrap(), vec![3.0, -2.0]);
    }

    #[test]
    fn layernorm_of_constant_preactivation_gives_offsets() {
        let p = NetworkParams::from_layers(vec![Layer {
            weights: array![[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
            bias: array![2.0, 2.0, 2.0],
            norm: Some(LayerNorm {
                gain: array![1.5, -0.5, 3.0],
                offset: array![0.1, 0.2, 0.3],
            }),
            activation: Activation::Identity,
        }])
        .unwrap();
        let out = p.forward(&[4.0, -1.0]).unwrap();
        assert_eq!(out, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn layernorm_shift_invariance() {
        let mut p = NetworkParams::init(&[3, 5, 2], &[true, false], 11).unwrap();
        let x = [0.3, -0.7, 1.1];
        let before = p.forward(&x).unwrap();
        p.layers_mut()[0].bias.mapv_inplace(|b| b + 4.25);
        let after = p.forward(&x).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_dimension_mismatch() {
        let p = NetworkParams::init(&[3, 4, 1], &[false, false], 0).unwrap();
        assert!(matches!(p.forward(&[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn from_layers_rejects_broken_chain() {
        let l1 = Layer {
            weights: Array2::zeros((4, 2)),
            bias: Array1::zeros(4),
            norm: None,
            activation: Activation::Relu,
        };
        let l2 = Layer {
            weights: Array2::zeros((1, 3)),
            bias: Array1::zeros(1),
            norm: None,
            activation: Activation::Identity,
        };
        assert!(matches!(NetworkParams::from_layers(vec![l1, l2]), Err(Error::Shape(_))));
    }

    #[test]
    fn polyak_limits() {
        let a = NetworkParams::init(&[2, 3, 1], &[false, false], 1).unwrap();
        let b = NetworkParams::init(&[2, 3, 1], &[false, false], 2).unwrap();
        assert_eq!(a.polyak_toward(&b, 1.0).unwrap().to_flat(), b.to_flat());
        let half = a.polyak_toward(&b, 0.5).unwrap().to_flat();
        for ((h, x), y) in half.iter().zip(a.to_flat()).zip(b.to_flat()) {
            assert!((h - 0.5 * (x + y)).abs() < 1e-15);
        }
    }
}
