//! Classical and learnable speech feature-extraction front-ends.
//!
//! The crate bundles a small reverse-mode tensor engine ([`tensor`]), the
//! DSP substrate ([`dsp`]), the four front-ends ([`frontends`]), SpecAugment
//! in the feature and STFT domains ([`specaugment`]), a toy CTC training
//! loop ([`training`]) and filter analysis tooling ([`analysis`]).

pub mod error;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::RandomSource;
pub mod dsp;
pub mod frontends;
pub mod specaugment;
pub mod training;
pub mod analysis;
pub mod io;
pub mod checks;
