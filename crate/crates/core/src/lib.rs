//! Inductive kriging for sensor networks with diffusion graph convolutions.
//!
//! A three-layer diffusion graph convolution network is trained to
//! reconstruct randomly masked sensors on randomly drawn subgraphs. Because
//! its parameters only act on the time and hidden dimensions, the trained
//! model estimates signals at sensors, and on whole networks, it never saw.

pub mod cli;
pub mod data;
pub mod error;
pub mod graph;
pub mod kriging;
pub mod model;
pub mod numerics;
pub mod sampler;
mod textio;
pub mod trainer;

pub use error::{Error, Result};
