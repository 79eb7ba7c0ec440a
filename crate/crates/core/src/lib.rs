//! Optimal extraction of an exhaustible commodity whose spot price follows a
//! Bachelier model with two-state regime-switching volatility.
//!
//! The crate computes the explicit solution of the finite-fuel singular
//! control problem and checks it independently:
//!
//! * [`model`] holds validated parameters and the maintenance-cost function.
//! * [`roots`] solves the characteristic equation of the coupled ODE system.
//! * [`stopping`] solves the family of optimal selling problems (free
//!   boundaries `x*_i(y)` and the value `w(x, i; y)`).
//! * [`control`] integrates the stopping value over the reserve to obtain
//!   `U(x, y, i)`, the reflecting boundaries `b*_i(x)` and the HJB verifier.
//! * [`mcsim`] simulates the controlled system and estimates policy values.

// Checks are written as `!(a <= b)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod mcsim;
pub mod model;
pub mod quadrature;
pub mod roots;
pub mod stopping;

pub use control::{ControlSolution, ValueReport};
pub use error::{Error, Result};
pub use mcsim::{Policy, SimConfig, SimOutcome};
pub use model::{AssumptionReport, CostFunction, ModelParams, RawParams, Regime};
pub use roots::RootSet;
pub use stopping::{Case, StoppingSolution};
