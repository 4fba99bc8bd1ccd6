use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::network::Sequential;
use crate::tensor::{Scalar, Tensor};

/// A set of single-example inputs of a fixed `(h, w, c)` shape with scalar targets.
#[derive(Clone, Debug, Default)]
pub struct Samples<T> {
    pub shape: [usize; 3],
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<T>,
}

impl<T: Scalar> Samples<T> {
    pub fn new(shape: [usize; 3]) -> Self {
        Self {
            shape,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn push(&mut self, input: Vec<T>, target: T) {
        assert_eq!(input.len(), self.shape.iter().product::<usize>(), "sample size");
        self.inputs.push(input);
        self.targets.push(target);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Stacks the selected samples into one `(n, h, w, c)` batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<T>, Vec<T>) {
        let [h, w, c] = self.shape;
        let mut data = Vec::with_capacity(indices.len() * h * w * c);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.inputs[i]);
            targets.push(self.targets[i]);
        }
        (Tensor::from_vec(&[indices.len(), h, w, c], data), targets)
    }

    pub fn mean_target(&self) -> f64 {
        self.targets.iter().map(|t| t.as_f64()).sum::<f64>() / self.len().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Start the output bias at the mean training target.
    pub init_bias_to_mean: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            patience: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            init_bias_to_mean: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub best: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().filter(|e| e.best).last()
    }

    /// `epoch,train_mse,val_mse,best_flag`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse,best_flag\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:.9e},{:.9e},{}", e.epoch, e.train_mse, e.val_mse, u8::from(e.best));
        }
        out
    }
}

/// Mean squared error of the network over a sample set.
pub fn evaluate_mse<T: Scalar>(net: &Sequential<T>, samples: &Samples<T>) -> Result<f64> {
    let mut total = 0.0;
    for chunk in (0..samples.len()).collect::<Vec<_>>().chunks(8) {
        let (x, y) = samples.batch(chunk);
        let pred = net.forward(&x)?;
        total += pred
            .data()
            .iter()
            .zip(&y)
            .map(|(&p, &t)| (p.as_f64() - t.as_f64()).powi(2))
            .sum::<f64>();
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch Adam on MSE with early stopping on validation MSE.
///
/// Training stops after `patience` consecutive epochs without a strict
/// improvement of the validation MSE (with `patience = 0`, at the first epoch
/// that fails to improve) or at `max_epochs`. The network is left holding the
/// best-epoch parameters.
pub fn train<T: Scalar>(
    net: &mut Sequential<T>,
    train_set: &Samples<T>,
    val_set: &Samples<T>,
    config: &TrainConfig,
) -> Result<History> {
    if train_set.is_empty() {
        return Err(Error::EmptySplit("training"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    if config.init_bias_to_mean {
        net.set_output_bias(T::lit(train_set.mean_target()));
    }
    let mut adam = Adam::new(config.adam, &net.params());
    let mut best_params: Vec<Vec<T>> = net.params().iter().map(|p| p.to_vec()).collect();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0;
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let (x, y) = train_set.batch(chunk);
            let (loss, grads) = net.mse_loss_and_grad(&x, &y)?;
            loss_sum += loss.as_f64() * chunk.len() as f64;
            adam.step(&mut net.params_mut(), &grads);
        }
        let train_mse = loss_sum / train_set.len() as f64;
        let val_mse = evaluate_mse(net, val_set)?;
        let improved = val_mse < best_val;
        if improved {
            best_val = val_mse;
            since_best = 0;
            best_params = net.params().iter().map(|p| p.to_vec()).collect();
        } else {
            since_best += 1;
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            best: improved,
        });
        if !improved && since_best >= config.patience {
            break;
        }
    }
    for (dst, src) in net.params_mut().into_iter().zip(best_params) {
        dst.copy_from_slice(&src);
    }
    Ok(history)
}
