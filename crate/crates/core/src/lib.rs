//! Music auto-tagging models and tooling.
//!
//! Two convolutional front-ends — a sample-level stack over raw 16 kHz
//! waveforms and a two-branch (timbral + temporal) design over 96-bin log-mel
//! spectrograms — feed one shared back-end that handles variable-length input
//! through global mean/max pooling. The crate also carries everything needed
//! to run the models end to end: a small autodiff tensor core with Adam, the
//! DSP pipeline, dataset manifests with stratified artist-aware splitting,
//! synthetic dataset generation, a training loop with moving-window
//! prediction averaging, and multi-label evaluation (ROC-AUC, average
//! precision, RMSE).

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod dsp;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use rng::SeedRng;
pub use scalar::Scalar;
pub use tensor::{Mode, Padding, Parameter, Tensor};
