//! Morphology-independent facial expression imitation.
//!
//! The crate decouples facial expressions from face morphology with a
//! self-supervised landmark autoencoder over a linear statistical head model,
//! maps the decoupled expression codes to simulated robot actuator commands
//! through an encoder/decoder transfer pair, and ships the full evaluation
//! harness (stability, representation error, command error, end-to-end
//! imitation) behind a deterministic batch CLI.

pub mod cli;
pub mod edm;
pub mod error;
pub mod etm;
pub mod evalkit;
pub mod headmodel;
pub mod jsonio;
pub mod linalg;
pub mod nnet;
pub mod pipeline;
pub mod rng;
pub mod robotsim;
pub mod synthdata;

pub use error::{Error, Result};
