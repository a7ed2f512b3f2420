//! Fairness-constrained binary classification with surrogate constraints.
//!
//! The crate trains linear models and one-hidden-layer ReLU networks under a
//! penalized objective `L_n(f) + lambda * phi_n(f)`, where `phi_n` is an
//! empirical fairness functional (disparate impact, equalized odds, equal
//! opportunity, uniform individual fairness, ...) composed with a surrogate
//! of the indicator `I(z > 0)`. The SLIDE surrogate, a ramp from 0 to 1 on
//! `(0, tau]`, is the centrepiece; hinge, linear and covariance relaxations
//! are provided for comparison.
//!
//! Beyond training, the crate computes test-time fairness reports, the
//! `M_nf` validity diagnostic, Pareto sweeps, feasible-set geometry of
//! surrogate constraints on parameter grids, and a convergence simulation.

pub mod adversary;
pub mod config;
pub mod constraint;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod matrix;
pub mod nn;
pub mod normal;
pub mod rng;
pub mod surrogate;
pub mod train;

pub use error::{Error, Result};
