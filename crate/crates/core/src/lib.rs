//! Surrogate-assisted black-box optimization over binary vectors with
//! factorization machines and QUBO annealing.
//!
//! The crate bundles the FMA and subsampling SFMA loops, a random-search
//! baseline, the lossy matrix-compression benchmark with its exhaustive
//! oracle, and the statistics used to compare seeded run ensembles.

pub mod annealer;
pub mod bbo;
pub mod error;
pub mod experiment;
pub mod fm;
pub mod metrics;
pub mod problem;
pub mod rng;
pub mod strategy;
pub mod training;

pub use error::{Error, Result};
