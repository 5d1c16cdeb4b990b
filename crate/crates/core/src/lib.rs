//! Solvers for linear fractional evolution equations of order `alpha` in
//! `(1, 2]` with a bounded generator and a time-dependent perturbation.

// `!(x > 0.0)` style guards reject NaN together with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closedform;
pub mod error;
pub mod families;
pub mod grid;
pub mod mlfunc;
pub mod operator;
pub mod oracle;
pub mod perturb;

pub use error::{Error, Result};
pub use grid::{Forcing, TimeDependentOperator, TimeGrid, Trajectory};
pub use mlfunc::{FractionalOrder, MlControl, MlParams};
pub use operator::BoundedOperator;
