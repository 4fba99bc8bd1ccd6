//! Central finite-difference checks of every layer's backward pass.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tinycnn::{cnn3x32, CnnSpec, Conv2d, Dense, Layer, Sequential, Tensor};

const H: f64 = 1e-3;
const TOL: f64 = 1e-4;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// `loss = Σ r ⊙ layer(x)`, whose gradient w.r.t. the output is `r`.
fn probe_loss(layer: &Layer<f64>, x: &Tensor<f64>, r: &[f64]) -> f64 {
    layer.forward(x).data().iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Input drawn so that ReLU kinks and max-pool ties sit far outside ±H.
fn kink_free_input(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0) * 0.01).collect();
    values.shuffle(rng);
    let data = values
        .into_iter()
        .map(|v| if rng.random_bool(0.5) { v } else { -v })
        .collect();
    Tensor::from_vec(shape, data)
}

fn check_layer(mut layer: Layer<f64>, x: Tensor<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let y = layer.forward(&x);
    let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let grad_out = Tensor::from_vec(y.shape(), r.clone());
    let mut grads: Vec<Vec<f64>> = layer.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let grad_in = layer.backward(&x, &y, &grad_out, &mut grads, true).expect("input gradient");

    let mut worst: f64 = 0.0;
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + H;
        let up = probe_loss(&layer, &xp, &r);
        xp.data_mut()[i] = orig - H;
        let down = probe_loss(&layer, &xp, &r);
        xp.data_mut()[i] = orig;
        worst = worst.max(rel_err(grad_in.data()[i], (up - down) / (2.0 * H)));
    }
    for (t, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let orig = layer.params()[t][i];
            layer.params_mut()[t][i] = orig + H;
            let up = probe_loss(&layer, &x, &r);
            layer.params_mut()[t][i] = orig - H;
            let down = probe_loss(&layer, &x, &r);
            layer.params_mut()[t][i] = orig;
            worst = worst.max(rel_err(g[i], (up - down) / (2.0 * H)));
        }
    }
    worst
}

fn random_conv(rng: &mut ChaCha8Rng, kernel: usize) -> (Layer<f64>, Vec<usize>) {
    let ic = rng.random_range(1..=3);
    let oc = rng.random_range(1..=3);
    let h = rng.random_range(3..=6);
    let w = rng.random_range(3..=6);
    let n = rng.random_range(1..=2);
    let mut conv = Conv2d::he(kernel, ic, oc, rng);
    conv.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    (Layer::Conv2d(conv), vec![n, h, w, ic])
}

fn run_layer_suite(name: &str, mut make: impl FnMut(&mut ChaCha8Rng) -> (Layer<f64>, Vec<usize>)) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.bytes().map(u64::from).sum());
    for trial in 0..20 {
        let (layer, shape) = make(&mut rng);
        let x = kink_free_input(&mut rng, &shape);
        let worst = check_layer(layer, x, &mut rng);
        assert!(worst < TOL, "{name} trial {trial}: relative error {worst:e}");
    }
}

#[test]
fn conv3x3_gradients() {
    run_layer_suite("conv3x3", |rng| random_conv(rng, 3));
}

#[test]
fn conv1x1_gradients() {
    run_layer_suite("conv1x1", |rng| random_conv(rng, 1));
}

#[test]
fn dense_gradients() {
    run_layer_suite("dense", |rng| {
        let i = rng.random_range(1..=8);
        let o = rng.random_range(1..=4);
        let mut d = Dense::init(i, o, 2.0, rng);
        d.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        (Layer::Dense(d), vec![rng.random_range(1..=3), i])
    });
}

#[test]
fn relu_gradients() {
    run_layer_suite("relu", |rng| {
        (Layer::Relu, vec![rng.random_range(1..=2), rng.random_range(2..=5), rng.random_range(2..=5), 2])
    });
}

#[test]
fn maxpool_gradients() {
    run_layer_suite("maxpool", |rng| {
        let h = 2 * rng.random_range(1..=3) + rng.random_range(0..=1);
        let w = 2 * rng.random_range(1..=3) + rng.random_range(0..=1);
        (Layer::MaxPool2, vec![rng.random_range(1..=2), h, w, rng.random_range(1..=3)])
    });
}

#[test]
fn gap_gradients() {
    run_layer_suite("gap", |rng| {
        (Layer::GlobalAvgPool, vec![rng.random_range(1..=2), rng.random_range(1..=4), rng.random_range(1..=4), 3])
    });
}

#[test]
fn flatten_gradients() {
    run_layer_suite("flatten", |rng| {
        (Layer::Flatten, vec![rng.random_range(1..=2), rng.random_range(1..=4), rng.random_range(1..=4), 2])
    });
}

fn mse(net: &Sequential<f64>, x: &Tensor<f64>, y: &[f64]) -> f64 {
    let p = net.forward(x).unwrap();
    p.data().iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// ReLU on/off states and max-pool winners for every example.
fn activation_pattern(net: &Sequential<f64>, x: &Tensor<f64>) -> Vec<usize> {
    let acts = net.forward_cached(x).unwrap();
    let mut pattern = Vec::new();
    for (i, layer) in net.layers.iter().enumerate() {
        match layer {
            Layer::Relu => pattern.extend(acts[i].data().iter().map(|&v| usize::from(v > 0.0))),
            Layer::MaxPool2 => {
                let s = acts[i].shape();
                let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
                let d = acts[i].data();
                for b in 0..n {
                    for y in 0..h / 2 {
                        for xx in 0..w / 2 {
                            for ch in 0..c {
                                let at = |dy: usize, dx: usize| d[((b * h + 2 * y + dy) * w + 2 * xx + dx) * c + ch];
                                let cands = [at(0, 0), at(0, 1), at(1, 0), at(1, 1)];
                                let best = (0..4).fold(0, |b, k| if cands[k] > cands[b] { k } else { b });
                                pattern.push(best);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    pattern
}

#[test]
fn whole_network_gradients_on_a_miniature() {
    let spec = CnnSpec {
        input_size: 16,
        channels: 3,
        hidden: 4,
    };
    let mut net = cnn3x32::<f64>(spec, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor::from_vec(&[2, 16, 16, 1], (0..512).map(|_| rng.random_range(0.0..1.0)).collect());
    let y = vec![0.3, 0.8];
    let (loss, grads) = net.mse_loss_and_grad(&x, &y).unwrap();
    assert!((loss - mse(&net, &x, &y)).abs() < 1e-12);
    let base = activation_pattern(&net, &x);

    // The loss is piecewise quadratic in any single parameter, so central
    // differences are exact unless the step crosses a ReLU or max-pool
    // switch. Such steps are retried with a step small enough not to.
    let mut worst: f64 = 0.0;
    let mut retried = 0;
    let mut total = 0;
    for (t, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let orig = net.params()[t][i];
            let mut h = H;
            let numeric = loop {
                net.params_mut()[t][i] = orig + h;
                let up = mse(&net, &x, &y);
                let up_same = activation_pattern(&net, &x) == base;
                net.params_mut()[t][i] = orig - h;
                let down = mse(&net, &x, &y);
                let down_same = activation_pattern(&net, &x) == base;
                net.params_mut()[t][i] = orig;
                if (up_same && down_same) || h < 1e-7 {
                    break (up - down) / (2.0 * h);
                }
                h /= 10.0;
            };
            if h < H {
                retried += 1;
            }
            total += 1;
            worst = worst.max(rel_err(g[i], numeric));
        }
    }
    assert!(retried * 4 < total, "{retried}/{total} parameters needed a smaller step");
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn dense_toy_matches_hand_derivative() {
    // pred = w x + b, loss = (pred - y)^2
    let (w, b, x, y) = (0.7, -0.2, 1.5, 2.0);
    let net = Sequential::new(
        [1, 1, 1],
        vec![
            Layer::Flatten,
            Layer::Dense(Dense {
                inputs: 1,
                outputs: 1,
                weights: vec![w],
                bias: vec![b],
            }),
        ],
    );
    let input = Tensor::from_vec(&[1, 1, 1, 1], vec![x]);
    let (loss, grads) = net.mse_loss_and_grad(&input, &[y]).unwrap();
    let err: f64 = w * x + b - y;
    assert!((loss - err * err).abs() < 1e-15);
    assert!((grads[0][0] - 2.0 * err * x).abs() < 1e-15);
    assert!((grads[1][0] - 2.0 * err).abs() < 1e-15);
}
