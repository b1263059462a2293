//! Simulation and training of free-space convolutional optical neural
//! networks.
//!
//! A network is a stack of 4f correlators. Each layer multiplies its input
//! field elementwise by a weight grid and adds a bias grid, then convolves
//! the result with a learnable Fourier-plane phase mask. Layers are joined
//! by a shifted ReLU on the field modulus, and the final field's intensity
//! is integrated over ten detector regions whose brightest member is the
//! predicted digit.
//!
//! * [`fft`] and [`field`]: centered unitary 2D transforms on square grids.
//! * [`optics`]: the forward model.
//! * [`grad`]: reverse-mode gradients and a finite-difference checker.
//! * [`training`]: softmax cross-entropy, SGD and evaluation.
//! * [`data`]: MNIST IDX parsing and embedding.
//! * [`checkpoint`], [`export`], [`manifest`]: file formats.
//! * [`energy`]: FLOPs-per-joule arithmetic.
//! * [`cli`]: the `conn` command line.
//!
//! The crate's `examples/` directory has one runnable program per
//! capability; `cargo run --example` lists them.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod energy;
pub mod error;
pub mod export;
pub mod fft;
pub mod field;
pub mod grad;
pub mod manifest;
pub mod optics;
pub mod training;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use error::{CheckpointError, Error, IdxError, Result};
pub use fft::{fft2, hadamard, ifft2, intensity};
pub use field::{Field, RealGrid};
pub use grad::{backward, grad_check, ForwardTape, Gradients};
pub use optics::{
    classify, forward, infer, preprocess, propagate_4f, region_readout, shifted_relu,
    superpose_intensity, DetectorLayout, LayerParams, Model, Readout, NUM_CLASSES,
};
pub use training::{cross_entropy, evaluate, sgd_step, softmax, train_epoch, MetricsRecord, TrainConfig};

pub use num_complex::Complex64;
