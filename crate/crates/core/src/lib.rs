//! Multi-armed bandits with spatial interference.
//!
//! Units live in a square; every round a policy assigns an arm to each unit
//! and observes their rewards, which may depend on the arms of nearby units
//! through a decaying interference kernel. The crate provides the geometry,
//! the robust randomized partition used to cluster units, reward models,
//! the HT-IX exposure estimator, EXP3-style policies, regret metrics and an
//! experiment harness.

pub mod environment;
pub mod estimator;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod partition;
pub mod policy;
pub mod rng;
pub mod validate;

pub use error::{Error, Result};
