//! Desk-scale laboratory for query-to-communication lifting.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: gadgets, coordinate sets, restrictions, search problems,
//!   protocol trees, decision trees and the simulation constants.
//! - [`dist`]: uniform distributions over explicit supports with exact
//!   probabilities, deficiency and sparsity, plus the numeric lemma checkers.
//! - [`disc`]: exact discrepancy and the product-distribution reduction.
//! - [`safety`]: the value classifiers (almost uniform, recoverable, heavy,
//!   light, dangerous, skewing, biasing).
//! - [`simdet`] and [`simrand`]: protocol-to-decision-tree simulations.
//! - [`counterex`]: the sparsification counterexample, analytically and at toy scale.
//! - [`suite`]: the fixed simulation instances used by tests and the CLI.

pub mod counterex;
pub mod disc;
pub mod dist;
pub mod error;
pub mod exact;
pub mod model;
pub mod safety;
pub mod simdet;
pub mod simrand;
pub mod suite;

pub use error::{LabError, Result};
pub use exact::Rational;

/// Comparison tolerance for every real-valued threshold.
pub const TOL: f64 = 1e-9;
