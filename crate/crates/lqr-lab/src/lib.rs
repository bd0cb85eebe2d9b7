//! Finite-horizon LQR under model misspecification.
//!
//! This crate synthesizes three controllers for the time-varying linear
//! quadratic problem — the optimal one, the misspecified-model (MM) controller
//! built by trusting an approximate model, and the iterative-learning (ILC)
//! controller whose corrections come from the model but whose rollouts come
//! from the true system — and numerically verifies the perturbation bounds
//! that separate them. Nonlinear counterparts (torque-limited pendulum, planar
//! quadrotor in wind) run through iterative LQR with a pluggable backward
//! model.
//!
//! Modules:
//!
//! * [`lqr`] — Riccati recursion, rollouts, closed-loop products, assumptions.
//! * [`mismatch`] — MM and closed-form ILC synthesis from an approximate model.
//! * [`ilc`] — the iterative scheme and its correction subproblem.
//! * [`bounds`] — numeric checks of every suboptimality/perturbation bound.
//! * [`nonlinear`] — RK4 discretization, iLQR, pendulum and quadrotor models.
//! * [`sweep`] — experiment configs, sweep drivers, CSV emission.
//! * [`oracle`] — independent reference computations used by the test suites.
//!
//! Sweep points and verification trials are data-parallel; the `parallel`
//! feature (on by default) maps them over rayon, and disabling it yields the
//! same results sequentially.

pub mod bounds;
pub mod error;
pub mod ilc;
pub mod linalg;
pub mod lqr;
pub mod mismatch;
pub mod nonlinear;
pub mod oracle;
pub mod par;
pub mod sweep;

pub use error::{Error, Result};
