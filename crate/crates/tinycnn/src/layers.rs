use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{matmul, Scalar, Tensor};

/// 2-D convolution, odd square kernel, stride 1, zero "same" padding.
///
/// Weights are laid out `[ky][kx][in][out]`, so for a fixed input tap the
/// output channels are contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        assert!(kernel % 2 == 1, "conv kernel must be odd");
        Self {
            kernel,
            in_channels,
            out_channels,
            weights: vec![T::zero(); kernel * kernel * in_channels * out_channels],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// He-normal weights, zero bias.
    pub fn he<R: Rng>(kernel: usize, in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let mut conv = Self::zeros(kernel, in_channels, out_channels);
        let std = (2.0 / (kernel * kernel * in_channels) as f64).sqrt();
        for w in &mut conv.weights {
            let z: f64 = StandardNormal.sample(rng);
            *w = T::lit(z * std);
        }
        conv
    }

    /// Weights uniform on `±1/√fan_in`, zero bias.
    pub fn uniform<R: Rng>(kernel: usize, in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let mut conv = Self::zeros(kernel, in_channels, out_channels);
        fill_uniform(&mut conv.weights, kernel * kernel * in_channels, rng);
        conv
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, input: &Tensor<T>) -> Tensor<T> {
        let n = input.batch();
        let (h, w, ic) = input.hwc();
        assert_eq!(ic, self.in_channels, "conv input channels");
        let oc = self.out_channels;
        let k = self.kernel;
        let kk = k * k * ic;
        let mut out = Tensor::zeros(&[n, h, w, oc]);
        let mut cols = if ic == 1 { Vec::new() } else { vec![T::zero(); block_len(h, w * kk)] };
        let src = input.data();
        let dst = out.data_mut();
        for b in 0..n {
            let src = &src[b * h * w * ic..(b + 1) * h * w * ic];
            let dst = &mut dst[b * h * w * oc..(b + 1) * h * w * oc];
            for px in dst.chunks_exact_mut(oc) {
                px.copy_from_slice(&self.bias);
            }
            if ic == 1 {
                for_each_tap(h, w, k, |src_px, dst_px, tap| {
                    let v = src[src_px];
                    let wt = &self.weights[tap * oc..(tap + 1) * oc];
                    for (o, &wv) in dst[dst_px * oc..(dst_px + 1) * oc].iter_mut().zip(wt) {
                        *o = *o + v * wv;
                    }
                });
            } else {
                for ys in row_blocks(h, w * kk) {
                    let px = ys.start * w..ys.end * w;
                    im2col(src, h, w, ic, k, ys, &mut cols);
                    let dst = &mut dst[px.start * oc..px.end * oc];
                    matmul(px.len(), kk, oc, &cols, false, &self.weights, false, dst, true);
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients and returns the input gradient when
    /// `need_input_grad` is set.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grad_w: &mut [T],
        grad_b: &mut [T],
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let n = input.batch();
        let (h, w, ic) = input.hwc();
        let oc = self.out_channels;
        let k = self.kernel;
        let kk = k * k * ic;
        let mut grad_in = need_input_grad.then(|| Tensor::zeros(input.shape()));
        let mut cols = if ic == 1 { Vec::new() } else { vec![T::zero(); block_len(h, w * kk)] };
        let mut gcols = if need_input_grad { vec![T::zero(); block_len(h, w * k * k * oc)] } else { Vec::new() };
        let flipped = if need_input_grad { self.flipped_weights() } else { Vec::new() };
        let src = input.data();
        let g = grad_out.data();
        for b in 0..n {
            let src = &src[b * h * w * ic..(b + 1) * h * w * ic];
            let g = &g[b * h * w * oc..(b + 1) * h * w * oc];
            for px in g.chunks_exact(oc) {
                for (gb, &v) in grad_b.iter_mut().zip(px) {
                    *gb = *gb + v;
                }
            }
            if ic == 1 {
                for_each_tap(h, w, k, |src_px, dst_px, tap| {
                    let v = src[src_px];
                    let gw = &mut grad_w[tap * oc..(tap + 1) * oc];
                    for (o, &gv) in gw.iter_mut().zip(&g[dst_px * oc..(dst_px + 1) * oc]) {
                        *o = *o + v * gv;
                    }
                });
            } else {
                for ys in row_blocks(h, w * kk) {
                    let px = ys.start * w..ys.end * w;
                    im2col(src, h, w, ic, k, ys, &mut cols);
                    matmul(kk, px.len(), oc, &cols, true, &g[px.start * oc..px.end * oc], false, grad_w, true);
                }
            }
            if let Some(gi) = grad_in.as_mut() {
                let gi = &mut gi.data_mut()[b * h * w * ic..(b + 1) * h * w * ic];
                for ys in row_blocks(h, w * k * k * oc) {
                    let px = ys.start * w..ys.end * w;
                    im2col(g, h, w, oc, k, ys, &mut gcols);
                    let gi = &mut gi[px.start * ic..px.end * ic];
                    matmul(px.len(), k * k * oc, ic, &gcols, false, &flipped, false, gi, false);
                }
            }
        }
        grad_in
    }

    /// Kernel rotated by 180 degrees with input and output channels swapped,
    /// laid out `(ky, kx, co)` by `ci`.
    fn flipped_weights(&self) -> Vec<T> {
        let (k, ic, oc) = (self.kernel, self.in_channels, self.out_channels);
        let mut f = vec![T::zero(); self.weights.len()];
        for tap in 0..k * k {
            let rot = k * k - 1 - tap;
            for ci in 0..ic {
                for co in 0..oc {
                    f[(tap * oc + co) * ic + ci] = self.weights[(rot * ic + ci) * oc + co];
                }
            }
        }
        f
    }
}

const BLOCK_ELEMS: usize = 1 << 16;

/// Splits `0..h` into runs of image rows whose im2col block holds about
/// `BLOCK_ELEMS` values.
fn row_blocks(h: usize, row_len: usize) -> impl Iterator<Item = Range<usize>> {
    let step = (BLOCK_ELEMS / row_len.max(1)).clamp(1, h.max(1));
    (0..h).step_by(step).map(move |y| y..(y + step).min(h))
}

fn block_len(h: usize, row_len: usize) -> usize {
    (BLOCK_ELEMS / row_len.max(1)).clamp(1, h.max(1)) * row_len
}

/// Calls `f(src_pixel, dst_pixel, tap)` for every in-bounds pairing of a
/// same-padded `k`×`k` window, one destination pixel at a time.
fn for_each_tap(h: usize, w: usize, k: usize, mut f: impl FnMut(usize, usize, usize)) {
    let pad = k / 2;
    for y in 0..h {
        for x in 0..w {
            for ky in 0..k {
                let Some(iy) = (y + ky).checked_sub(pad).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..k {
                    if let Some(ix) = (x + kx).checked_sub(pad).filter(|&v| v < w) {
                        f(iy * w + ix, y * w + x, ky * k + kx);
                    }
                }
            }
        }
    }
}

/// Rows are the output pixels of image rows `ys`, columns `(ky, kx, c)`;
/// out-of-bounds taps are zero.
fn im2col<T: Scalar>(src: &[T], h: usize, w: usize, ch: usize, k: usize, ys: Range<usize>, cols: &mut [T]) {
    let pad = k / 2;
    let kk = k * k * ch;
    let y0 = ys.start;
    for y in ys {
        for x in 0..w {
            let row = &mut cols[((y - y0) * w + x) * kk..((y - y0) * w + x + 1) * kk];
            for ky in 0..k {
                let iy = (y + ky).checked_sub(pad).filter(|&v| v < h);
                for kx in 0..k {
                    let ix = (x + kx).checked_sub(pad).filter(|&v| v < w);
                    let tap = ky * k + kx;
                    let dst = &mut row[tap * ch..(tap + 1) * ch];
                    match (iy, ix) {
                        (Some(iy), Some(ix)) => dst.copy_from_slice(&src[(iy * w + ix) * ch..(iy * w + ix + 1) * ch]),
                        _ => dst.fill(T::zero()),
                    }
                }
            }
        }
    }
}

fn fill_uniform<T: Scalar, R: Rng>(weights: &mut [T], fan_in: usize, rng: &mut R) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for w in weights {
        *w = T::lit(rng.random_range(-bound..bound));
    }
}

/// Fully connected layer; weights are `[in][out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    /// Normal weights with variance `gain / inputs`, zero bias.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let mut dense = Self::zeros(inputs, outputs);
        let std = (gain / inputs as f64).sqrt();
        for w in &mut dense.weights {
            let z: f64 = StandardNormal.sample(rng);
            *w = T::lit(z * std);
        }
        dense
    }

    /// Weights uniform on `±1/√inputs`, zero bias.
    pub fn uniform<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let mut dense = Self::zeros(inputs, outputs);
        fill_uniform(&mut dense.weights, inputs, rng);
        dense
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, input: &Tensor<T>) -> Tensor<T> {
        let n = input.batch();
        assert_eq!(input.len(), n * self.inputs, "dense input width");
        let mut out = Tensor::zeros(&[n, self.outputs]);
        for b in 0..n {
            let x = &input.data()[b * self.inputs..(b + 1) * self.inputs];
            let acc = &mut out.data_mut()[b * self.outputs..(b + 1) * self.outputs];
            acc.copy_from_slice(&self.bias);
            for (i, &a) in x.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
                for (o, &wv) in acc.iter_mut().zip(row) {
                    *o = *o + a * wv;
                }
            }
        }
        out
    }

    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grad_w: &mut [T],
        grad_b: &mut [T],
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let n = input.batch();
        let mut grad_in = need_input_grad.then(|| Tensor::zeros(input.shape()));
        for b in 0..n {
            let x = &input.data()[b * self.inputs..(b + 1) * self.inputs];
            let go = &grad_out.data()[b * self.outputs..(b + 1) * self.outputs];
            for (gb, &v) in grad_b.iter_mut().zip(go) {
                *gb = *gb + v;
            }
            for (i, &a) in x.iter().enumerate() {
                let range = i * self.outputs..(i + 1) * self.outputs;
                if a != T::zero() {
                    for (gw, &v) in grad_w[range.clone()].iter_mut().zip(go) {
                        *gw = *gw + a * v;
                    }
                }
                if let Some(gi) = grad_in.as_mut() {
                    let dot: T = self.weights[range].iter().zip(go).map(|(&wv, &v)| wv * v).sum();
                    gi.data_mut()[b * self.inputs + i] = dot;
                }
            }
        }
        grad_in
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    Relu,
    /// 2×2 window, stride 2; odd trailing rows/columns are dropped.
    MaxPool2,
    Flatten,
    GlobalAvgPool,
    Dense(Dense<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2 => "maxpool2",
            Layer::Flatten => "flatten",
            Layer::GlobalAvgPool => "gap",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.param_count(),
            Layer::Dense(d) => d.param_count(),
            _ => 0,
        }
    }

    /// Parameter tensors in (weights, bias) order; empty for stateless layers.
    pub fn params(&self) -> Vec<&[T]> {
        match self {
            Layer::Conv2d(c) => vec![&c.weights, &c.bias],
            Layer::Dense(d) => vec![&d.weights, &d.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weights, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weights, &mut d.bias],
            _ => Vec::new(),
        }
    }

    /// Output shape for a given input shape (batch dimension included).
    pub fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        match self {
            Layer::Conv2d(c) => vec![input[0], input[1], input[2], c.out_channels],
            Layer::Relu => input.to_vec(),
            Layer::MaxPool2 => vec![input[0], input[1] / 2, input[2] / 2, input[3]],
            Layer::Flatten => vec![input[0], input[1..].iter().product()],
            Layer::GlobalAvgPool => vec![input[0], input[3]],
            Layer::Dense(d) => vec![input[0], d.outputs],
        }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Tensor<T> {
        let out = match self {
            Layer::Conv2d(c) => c.forward(input),
            Layer::Relu => {
                let mut out = input.clone();
                for v in out.data_mut() {
                    *v = v.max(T::zero());
                }
                out
            }
            Layer::MaxPool2 => maxpool_forward(input),
            Layer::Flatten => {
                let shape = self.output_shape(input.shape());
                input.clone().reshape(&shape)
            }
            Layer::GlobalAvgPool => gap_forward(input),
            Layer::Dense(d) => d.forward(input),
        };
        debug_assert!(out.all_finite(), "non-finite activation after {}", self.name());
        out
    }

    /// Backward pass for one layer. `grads` holds this layer's parameter
    /// gradients in [`Layer::params`] order.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        output: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut [Vec<T>],
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        match self {
            Layer::Conv2d(c) => {
                let (gw, gb) = grads.split_at_mut(1);
                c.backward(input, grad_out, &mut gw[0], &mut gb[0], need_input_grad)
            }
            Layer::Dense(d) => {
                let (gw, gb) = grads.split_at_mut(1);
                d.backward(input, grad_out, &mut gw[0], &mut gb[0], need_input_grad)
            }
            _ if !need_input_grad => None,
            Layer::Relu => {
                let mut grad = grad_out.clone();
                for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
                    if x <= T::zero() {
                        *g = T::zero();
                    }
                }
                Some(grad)
            }
            Layer::MaxPool2 => Some(maxpool_backward(input, output, grad_out)),
            Layer::Flatten => Some(grad_out.clone().reshape(input.shape())),
            Layer::GlobalAvgPool => Some(gap_backward(input, grad_out)),
        }
    }
}

fn maxpool_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let n = input.batch();
    let (h, w, c) = input.hwc();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, oh, ow, c]);
    let src = input.data();
    let dst = out.data_mut();
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                let at = |dy: usize, dx: usize| {
                    let i = ((b * h + 2 * y + dy) * w + 2 * x + dx) * c;
                    &src[i..i + c]
                };
                let (p00, p01, p10, p11) = (at(0, 0), at(0, 1), at(1, 0), at(1, 1));
                let o = ((b * oh + y) * ow + x) * c;
                for (ch, d) in dst[o..o + c].iter_mut().enumerate() {
                    *d = p00[ch].max(p01[ch]).max(p10[ch]).max(p11[ch]);
                }
            }
        }
    }
    out
}

/// Routes each output gradient to the first maximal input of its window
/// (row-major scan order).
fn maxpool_backward<T: Scalar>(input: &Tensor<T>, output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let n = input.batch();
    let (h, w, c) = input.hwc();
    let (oh, ow) = (h / 2, w / 2);
    let mut grad_in = Tensor::zeros(input.shape());
    let src = input.data();
    let out = output.data();
    let g = grad_out.data();
    let gi = grad_in.data_mut();
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                let o = ((b * oh + y) * ow + x) * c;
                let idx = |dy: usize, dx: usize| ((b * h + 2 * y + dy) * w + 2 * x + dx) * c;
                let win = [idx(0, 0), idx(0, 1), idx(1, 0), idx(1, 1)];
                for ch in 0..c {
                    let m = out[o + ch];
                    if let Some(&i) = win.iter().find(|&&i| src[i + ch] == m) {
                        gi[i + ch] = gi[i + ch] + g[o + ch];
                    }
                }
            }
        }
    }
    grad_in
}

fn gap_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let n = input.batch();
    let (h, w, c) = input.hwc();
    let mut out = Tensor::zeros(&[n, c]);
    let scale = T::lit(1.0 / (h * w) as f64);
    for b in 0..n {
        let src = &input.data()[b * h * w * c..(b + 1) * h * w * c];
        let acc = &mut out.data_mut()[b * c..(b + 1) * c];
        for pixel in src.chunks_exact(c) {
            for (a, &v) in acc.iter_mut().zip(pixel) {
                *a = *a + v;
            }
        }
        for a in acc.iter_mut() {
            *a = *a * scale;
        }
    }
    out
}

fn gap_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let n = input.batch();
    let (h, w, c) = input.hwc();
    let scale = T::lit(1.0 / (h * w) as f64);
    let mut grad_in = Tensor::zeros(input.shape());
    for b in 0..n {
        let go = &grad_out.data()[b * c..(b + 1) * c];
        let gi = &mut grad_in.data_mut()[b * h * w * c..(b + 1) * h * w * c];
        for pixel in gi.chunks_exact_mut(c) {
            for (p, &g) in pixel.iter_mut().zip(go) {
                *p = g * scale;
            }
        }
    }
    grad_in
}
