//! Downlink max-min power control for cell-free massive MIMO.
//!
//! The crate generates network instances with pilot contamination
//! ([`scenario`]), evaluates the closed-form spectral-efficiency bound
//! ([`metrics`]), solves the smoothed max-min problem with an accelerated
//! projected gradient method ([`apg`]) and trains a pilot-contamination-aware
//! graph attention network on the same utility ([`gat`], [`training`]).
//! Gradients for both the solver and the network come from the dense
//! reverse-mode engine in [`autodiff`].

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apg;
pub mod autodiff;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evalbench;
pub mod feasible;
pub mod gat;
pub mod metrics;
pub mod objective;
pub mod scenario;
pub mod training;

pub use config::{RadioConfig, SystemConfig};
pub use error::{Error, Result};
pub use feasible::PowerMatrix;
pub use metrics::SystemStats;
pub use scenario::ScenarioSample;

/// Dense row-major matrix used throughout the crate.
pub type Mat = ndarray::Array2<f64>;
