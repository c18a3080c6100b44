//! Multilayer perceptrons trained with backpropagation and four
//! feedback-alignment variants, with tools to compare the trained models.
//!
//! - [`tensor`]: dense `f64` matrix kernel
//! - [`network`]: MLP spec, seeded initialization, forward pass and loss
//! - [`trainers`]: backward rules, feedback matrices, updates, epoch loop
//! - [`datasets`]: MNIST/CIFAR-10 loaders and synthetic data
//! - [`experiment`]: seeded runs, suites and on-disk artifacts
//! - [`analysis`]: accuracy, prediction agreement and weight similarity tables

pub mod analysis;
pub mod cli;
pub mod datasets;
mod error;
pub mod experiment;
pub mod network;
pub mod rng;
pub mod tensor;
pub mod trainers;

pub use error::{Error, Result};
