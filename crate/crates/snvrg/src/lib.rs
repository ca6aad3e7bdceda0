//! Finite-sum stochastic optimization with nested variance reduction.
//!
//! The crate centers on a nested variance-reduced gradient method: each
//! epoch maintains a hierarchy of reference points and reference gradients
//! refreshed at geometrically spaced periods, so that the update direction
//! is a telescoping sum of batch gradient differences. Around that core sit
//! deterministic problem generators, a splittable RNG for reproducible
//! subsampling, classical baselines (gradient descent, SGD, SVRG, SCSG),
//! and exact accounting of component gradient evaluations with closed-form
//! cross-checks.
//!
//! Everything is driven by a single master seed: runs are bitwise
//! reproducible across loop organizations and thread counts.

pub mod accounting;
pub mod baselines;
pub mod drivers;
pub mod epoch;
pub mod error;
pub mod objectives;
pub mod sampling;
pub mod schedule;

pub use error::{Error, Result};
