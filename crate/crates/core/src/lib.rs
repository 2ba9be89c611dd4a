//! Evidential uncertainty modelling for long-tailed classification.
//!
//! The crate turns per-class evidence into Dirichlet parameters, splits
//! predictive uncertainty into aleatoric and epistemic parts, and uses
//! those to reweight samples and adapt label smoothing while training a
//! small evidential network on a seeded long-tailed benchmark.

pub mod data;
pub mod error;
pub mod evidential;
pub mod experiment;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod policy;
pub mod special;
pub mod trainer;

pub use error::{Error, Result};
