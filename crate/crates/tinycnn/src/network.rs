use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::{Conv2d, Dense, Layer};
use crate::tensor::{Scalar, Tensor};

/// Per-parameter-tensor gradients, in [`Sequential::params`] order.
pub type Gradients<T> = Vec<Vec<T>>;

/// A feed-forward stack of layers over `(h, w, c)` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequential<T> {
    pub input_shape: [usize; 3],
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer<T>>) -> Self {
        Self { input_shape, layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        self.params().iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    /// Output shape for a batch of `n`.
    pub fn output_shape(&self, n: usize) -> Vec<usize> {
        let [h, w, c] = self.input_shape;
        self.layers
            .iter()
            .fold(vec![n, h, w, c], |shape, layer| layer.output_shape(&shape))
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let [h, w, c] = self.input_shape;
        let s = input.shape();
        if s.len() != 4 || s[1..] != [h, w, c] {
            return Err(Error::ShapeMismatch {
                expected: vec![s.first().copied().unwrap_or(0), h, w, c],
                got: s.to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x);
        }
        Ok(x)
    }

    /// Runs the first `upto` layers only.
    pub fn forward_prefix(&self, input: &Tensor<T>, upto: usize) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers[..upto] {
            x = layer.forward(&x);
        }
        Ok(x)
    }

    /// Every intermediate activation; element 0 is the input.
    pub fn forward_cached(&self, input: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        for layer in &self.layers {
            let next = layer.forward(acts.last().expect("non-empty"));
            acts.push(next);
        }
        Ok(acts)
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the network output) and
    /// accumulates into `grads`.
    pub fn backward(&self, acts: &[Tensor<T>], grad_out: Tensor<T>, grads: &mut Gradients<T>) {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut next = 0;
        for layer in &self.layers {
            offsets.push(next);
            next += layer.params().len();
        }
        let mut g = grad_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let n_params = layer.params().len();
            let slot = &mut grads[offsets[i]..offsets[i] + n_params];
            let need_input_grad = i > 0;
            match layer.backward(&acts[i], &acts[i + 1], &g, slot, need_input_grad) {
                Some(gi) => g = gi,
                None => break,
            }
        }
    }

    /// Mean squared error over the batch and its parameter gradients.
    ///
    /// Examples are pushed through one at a time so activation memory stays
    /// bounded by a single example.
    pub fn mse_loss_and_grad(&self, input: &Tensor<T>, targets: &[T]) -> Result<(T, Gradients<T>)> {
        self.check_input(input)?;
        let n = input.batch();
        let out_shape = self.output_shape(1);
        if out_shape != [1, 1] || targets.len() != n {
            return Err(Error::ShapeMismatch {
                expected: vec![n, 1],
                got: vec![targets.len(), out_shape.last().copied().unwrap_or(0)],
            });
        }
        let per = input.len() / n;
        let [h, w, c] = self.input_shape;
        let mut grads = self.zero_gradients();
        let mut loss = T::zero();
        let scale = T::lit(1.0 / n as f64);
        for (b, &target) in targets.iter().enumerate() {
            let x = Tensor::from_vec(&[1, h, w, c], input.data()[b * per..(b + 1) * per].to_vec());
            let acts = self.forward_cached(&x)?;
            let pred = acts.last().expect("non-empty").data()[0];
            let err = pred - target;
            loss = loss + err * err * scale;
            let g = Tensor::from_vec(&[1, 1], vec![T::lit(2.0) * err * scale]);
            self.backward(&acts, g, &mut grads);
        }
        Ok((loss, grads))
    }

    /// SHA-256 over every parameter as little-endian `f32`.
    pub fn param_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for p in self.params() {
            for v in p {
                hasher.update(v.as_f32().to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }

    /// Layer indices just after each max-pool, i.e. the end of each conv block.
    pub fn block_ends(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::MaxPool2))
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Activations after conv block `block` (1-based), shape `(n, h, w, c)`.
    pub fn tap(&self, input: &Tensor<T>, block: usize) -> Result<Tensor<T>> {
        let ends = self.block_ends();
        let end = block
            .checked_sub(1)
            .and_then(|i| ends.get(i))
            .ok_or(Error::InvalidTap {
                index: block,
                blocks: ends.len(),
            })?;
        self.forward_prefix(input, *end)
    }

    /// Sets the bias of the final dense layer.
    pub fn set_output_bias(&mut self, value: T) {
        if let Some(Layer::Dense(d)) = self.layers.iter_mut().rev().find(|l| matches!(l, Layer::Dense(_))) {
            d.bias.iter_mut().for_each(|b| *b = value);
        }
    }

    pub fn to_f32(&self) -> Sequential<f32> {
        convert(self)
    }

    pub fn to_f64(&self) -> Sequential<f64> {
        convert(self)
    }
}

fn convert<T: Scalar, U: Scalar>(net: &Sequential<T>) -> Sequential<U> {
    let cast = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<_>>();
    let layers = net
        .layers
        .iter()
        .map(|l| match l {
            Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                kernel: c.kernel,
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                weights: cast(&c.weights),
                bias: cast(&c.bias),
            }),
            Layer::Dense(d) => Layer::Dense(Dense {
                inputs: d.inputs,
                outputs: d.outputs,
                weights: cast(&d.weights),
                bias: cast(&d.bias),
            }),
            Layer::Relu => Layer::Relu,
            Layer::MaxPool2 => Layer::MaxPool2,
            Layer::Flatten => Layer::Flatten,
            Layer::GlobalAvgPool => Layer::GlobalAvgPool,
        })
        .collect();
    Sequential::new(net.input_shape, layers)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Shape parameters of the three-block CNN.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CnnSpec {
    pub input_size: usize,
    pub channels: usize,
    pub hidden: usize,
}

impl Default for CnnSpec {
    fn default() -> Self {
        Self {
            input_size: 128,
            channels: 32,
            hidden: 64,
        }
    }
}

impl CnnSpec {
    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let c = self.channels;
        let side = self.input_size / 8;
        let conv1 = 9 * c + c;
        let conv = 9 * c * c + c;
        let dense1 = side * side * c * self.hidden + self.hidden;
        let dense2 = self.hidden + 1;
        conv1 + 2 * conv + dense1 + dense2
    }
}

/// Three blocks of (3×3 conv, ReLU, 2×2 max-pool) followed by a
/// dense-ReLU-dense regression head.
pub fn cnn3x32<T: Scalar>(spec: CnnSpec, seed: u64) -> Sequential<T> {
    assert!(spec.input_size % 8 == 0 && spec.input_size > 0, "input size must be a multiple of 8");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = spec.channels;
    let side = spec.input_size / 8;
    let mut layers = Vec::new();
    let mut in_ch = 1;
    for _ in 0..3 {
        layers.push(Layer::Conv2d(Conv2d::uniform(3, in_ch, c, &mut rng)));
        layers.push(Layer::Relu);
        layers.push(Layer::MaxPool2);
        in_ch = c;
    }
    layers.push(Layer::Flatten);
    layers.push(Layer::Dense(Dense::uniform(side * side * c, spec.hidden, &mut rng)));
    layers.push(Layer::Relu);
    layers.push(Layer::Dense(Dense::uniform(spec.hidden, 1, &mut rng)));
    Sequential::new([spec.input_size, spec.input_size, 1], layers)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeKind {
    /// GAP → dense(1).
    Linear,
    /// 1×1 conv (K channels) → ReLU → GAP → dense(1).
    ConvLinear { channels: usize },
}

/// Small regression head over a frozen `(h, w, c)` feature map.
pub fn probe_head<T: Scalar>(feature_shape: [usize; 3], kind: ProbeKind, seed: u64) -> Sequential<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = feature_shape[2];
    let mut layers = Vec::new();
    let width = match kind {
        ProbeKind::Linear => c,
        ProbeKind::ConvLinear { channels } => {
            layers.push(Layer::Conv2d(Conv2d::uniform(1, c, channels, &mut rng)));
            layers.push(Layer::Relu);
            channels
        }
    };
    layers.push(Layer::GlobalAvgPool);
    layers.push(Layer::Dense(Dense::uniform(width, 1, &mut rng)));
    Sequential::new(feature_shape, layers)
}
