//! A minimal convolutional network engine: NHWC tensors, a handful of layers
//! with hand-written backward passes, Adam, and an early-stopping trainer.
//!
//! Everything is generic over [`Scalar`] so the same code trains in `f32` and
//! is gradient-checked in `f64`.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod layers;
pub mod network;
pub mod tensor;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use error::{Error, Result};
pub use layers::{Conv2d, Dense, Layer};
pub use network::{cnn3x32, probe_head, CnnSpec, Gradients, ProbeKind, Sequential};
pub use tensor::{Scalar, Tensor};
pub use train::{evaluate_mse, train, EpochRecord, History, Samples, TrainConfig};
