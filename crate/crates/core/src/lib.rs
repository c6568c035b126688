//! Clipping-operator laboratory for group-relative policy optimization.
//!
//! This crate is `no_std` (it needs `alloc`). It contains everything that is
//! pure computation:
//!
//! - [`ratio_ops`]: trust-region intervals and the boundary operators (hard
//!   clipping, near-boundary stochastic rescue, binary admission, soft decay
//!   and the decision/execution noise probes).
//! - [`expectation`]: closed-form expected effective ratio and gradient of the
//!   stochastic rescue operator, plus a sharded Monte Carlo estimator.
//! - [`advantage`]: group-relative advantages and advantage noise.
//! - [`surrogate`]: token- and sequence-level clipped surrogate objectives.
//! - [`simenv`]: a verifiable-reward toy environment with a tabular softmax
//!   policy whose gradients are exact.
//! - [`trainer`]: the training loop with dynamic sampling and the
//!   experiment-matrix runner.
//! - [`metrics`]: step diagnostics and cross-seed aggregation.
//!
//! File formats, configuration and the command-line tool live in the
//! `cliplab` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
    }};
}

pub mod advantage;
pub mod error;
pub mod expectation;
pub mod metrics;
pub mod ratio_ops;
pub mod rng;
pub mod simenv;
pub mod surrogate;
pub mod trainer;

pub use error::{Error, Result};
pub use ratio_ops::{
    AdmissibleInterval, AdvantageSign, Bound, ClipOperator, OperatorOutcome, ProbeMode,
    TrustRegion, Zone,
};
