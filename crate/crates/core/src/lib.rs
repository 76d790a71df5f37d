//! Reconstructing per-second browsing activity from browser history.

pub mod active_features;
pub mod activity;
pub mod baselines;
pub mod corpus;
pub mod dataset;
pub mod domain_features;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod forest;
pub mod history;
pub mod metrics;
pub mod model;
pub mod reconstruct;
pub mod simulator;
pub mod timeline;
pub mod training;

pub use error::{Error, Result};
