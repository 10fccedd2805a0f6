//! Over-the-air federated distillation: channel and knowledge models,
//! analog aggregation, the optimal transceiver via semidefinite relaxation,
//! a small distillation learner, convergence metrics, and a desk-scale
//! experiment driver.

pub mod airagg;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod knowledge;
pub mod learner;
pub mod metrics;
pub mod rng;
pub mod sdp;
pub mod transceiver;

pub use error::{Error, Result};
