//! Randomized content caching in Poisson small-cell networks.
//!
//! Modules, bottom-up:
//! - [`spatial`]: Poisson point processes on disks.
//! - [`caching`]: model parameters, profiles, strategies and the closed-form
//!   offloading loss.
//! - [`simulation`]: Monte Carlo estimate of the loss and request/source traces.
//! - [`estimation`]: empirical and transfer-learning popularity estimators.
//! - [`optimizer`]: simplex-constrained minimization of the loss.
//! - [`bounds`]: waiting-time bounds and thresholds.
//! - [`experiment`]: experiment specs, runners and reports used by the CLI.

// Validation uses `!(x > 0)` so that NaN is rejected along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod caching;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod optimizer;
pub mod rng;
pub mod scalar;
pub mod simulation;
pub mod spatial;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use caching::{
    miss_probability, offloading_loss, zipf_profile, CacheContents, FileIndex, FormulaMode,
};

pub type NetworkConfig = caching::NetworkConfig<f64>;
pub type PopularityProfile = caching::PopularityProfile<f64>;
pub type CachingStrategy = caching::CachingStrategy<f64>;
pub type BoundInputs = bounds::BoundInputs<f64>;
pub type WaitingTimeBound = bounds::WaitingTimeBound<f64>;

pub type NetworkConfig32 = caching::NetworkConfig<f32>;
pub type PopularityProfile32 = caching::PopularityProfile<f32>;
pub type CachingStrategy32 = caching::CachingStrategy<f32>;
pub type BoundInputs32 = bounds::BoundInputs<f32>;
pub type WaitingTimeBound32 = bounds::WaitingTimeBound<f32>;
