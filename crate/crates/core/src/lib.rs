//! Finite-sample exponential tail bounds for U-statistics with heavy-tailed
//! kernels, and the Monte Carlo machinery to check them.
//!
//! The pieces, bottom up: [`tail_models`] (laws and their tail functions J),
//! [`kernels`] (kernels, fast U-statistics, tail functions I), [`bounds`]
//! (the three-term upper bound), [`mc_engine`] (reproducible simulation),
//! [`ldp`] (lower bounds, rate diagnostics, assumption checks) and
//! [`experiment`] (config-driven pipelines).

pub mod bounds;
pub mod config;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod ldp;
pub mod mc_engine;
pub mod numeric;
pub mod rng;
pub mod tail_models;
mod token;

pub use bounds::{evaluate_upper_bound, BoundBreakdown, BoundEvaluator, BoundInput, VMode};
pub use config::{parse_config, ExperimentConfig};
pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec, KernelTail};
pub use rng::{derive_stream, RngStream, StreamFamily};
pub use tail_models::DistributionModel;
