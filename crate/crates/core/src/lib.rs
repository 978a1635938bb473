//! A small, dependency-light convolutional network engine for real-time
//! classification of 96x96 grayscale images on a single CPU core.
//!
//! The engine provides the Tiny, Fire and SmallFire blocks, builders for
//! TinyNet, SmallFireNet, a two-Fire baseline and a LeNet-style baseline,
//! exact parameter and FLOP accounting, ADAM training with k-fold
//! evaluation, a binary model format and a latency benchmark harness.

pub mod arch;
pub mod bench;
pub mod blocks;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod layers;
pub mod model;
pub mod store;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Shape, Tensor};
