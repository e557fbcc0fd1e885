//! Numerics for sub-linear expectations generated by finite families of
//! probability laws.
//!
//! The crate is organised bottom-up:
//!
//! - [`quadrature`]: adaptive Gauss–Kronrod integration and the half-line
//!   doubling integrator with divergence detection.
//! - [`measure`], [`event`], [`test_function`]: one-dimensional laws, interval
//!   events and the test functions integrated against them.
//! - [`expectation`]: the generator set, its upper/lower expectations, the
//!   capacity pair, Choquet integrals and truncated (extended) expectations.
//! - [`functionals`]: the iterated-logarithm normaliser, the moment
//!   functionals and the two series used to control partial-sum maxima.
//! - [`bounds`]: the exponential inequality, the dyadic blocking bound and the
//!   moment brackets.
//! - [`paths`]: exact adversarial dynamic programming, selection policies and
//!   Monte Carlo estimates of normalised partial-sum maxima.
//! - [`moving_average`]: linear processes driven by i.i.d. innovations and
//!   their iterated-logarithm diagnostics.

pub mod bounds;
pub mod error;
pub mod event;
pub mod expectation;
pub mod functionals;
pub mod measure;
pub mod moving_average;
pub mod paths;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod stats;
pub mod test_function;

pub use error::{Error, Result};
pub use event::{Event, Interval};
pub use expectation::{ChoquetConfig, ChoquetResult, ChoquetStatus, ExtendedExpectation, GeneratorSet};
pub use measure::{Measure, QuantileFn, Sign, SurvivalFn};
pub use test_function::{FunctionClass, TestFunction};
