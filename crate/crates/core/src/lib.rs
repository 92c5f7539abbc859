//! Stochastic successive upper-bound minimization (SSUM).
//!
//! The crate is organized around a generic engine ([`engine`]) that minimizes
//! an expected objective by, at each iteration, drawing one sample, building
//! a locally tight convex upper bound anchored at the current iterate, and
//! exactly minimizing the running average of all bounds collected so far.
//! Three problem instances plug into the engine:
//!
//! - [`wmmse`]: ergodic sum-rate maximization for a multi-cell interfering
//!   broadcast channel under partial channel knowledge,
//! - [`dictlearn`]: online sparse dictionary learning,
//! - [`sg`]: quadratic surrogates that recover classical stochastic
//!   (sub-)gradient recursions in closed form.
//!
//! [`experiment`] drives end-to-end comparisons and invariant sweeps behind a
//! plain-text config format; [`hermitian`] holds the dense complex kernels.

pub mod dictlearn;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod hermitian;
pub mod rng;
pub mod sg;
pub mod util;
pub mod wmmse;

pub use error::{Error, Result};
