//! Event-stream classification with directly trained convolutional spiking
//! networks.
//!
//! The crate covers the whole pipeline: event streams and their binary frame
//! encoding ([`events`]), stream-level augmentations ([`augment`]), an
//! integrate-and-fire network trained with surrogate gradients through time
//! ([`snn`]), the spike-rate energy estimator ([`energy`]) and the k-fold
//! experiment harness with its regression analysis ([`bench`]). The [`cli`]
//! module wires all of it to the `evsnn` binary.

pub mod augment;
pub mod bench;
pub mod cli;
pub mod energy;
pub mod error;
pub mod events;
pub mod experiment;
pub mod rng;
pub mod snn;

pub use error::{Error, Result};
