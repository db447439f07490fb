//! A one-layer graph transformer with shortest-path positional encoding,
//! trained by SGD on structured synthetic graphs, together with the data
//! generator, diagnostics and sweep harness used to study its sample
//! complexity against a GCN-style ablation.

pub mod analyze;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod grad;
pub mod gradcheck;
pub mod graph;
pub mod graphgen;
pub mod linalg;
pub mod model;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
