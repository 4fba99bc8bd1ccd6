//! Rough forward/backward timing of the default 128×128 network.

use std::time::Instant;

use tinycnn::{cnn3x32, CnnSpec, Tensor};

fn main() {
    let net = cnn3x32::<f32>(CnnSpec::default(), 0);
    let n = 8;
    let x = Tensor::from_vec(&[n, 128, 128, 1], (0..n * 128 * 128).map(|i| ((i * 31) % 255) as f32 / 255.0).collect());
    let targets = vec![0.5f32; n];
    let t = Instant::now();
    let _ = net.forward(&x).unwrap();
    let fwd = t.elapsed().as_secs_f64() / n as f64;
    let t = Instant::now();
    let _ = net.mse_loss_and_grad(&x, &targets).unwrap();
    let both = t.elapsed().as_secs_f64() / n as f64;
    println!("forward {:.1} ms/example, forward+backward {:.1} ms/example", fwd * 1e3, both * 1e3);
}
