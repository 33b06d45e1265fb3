//! Semi-analytical solvers for a McKean–Vlasov diffusion whose drift is fed
//! back through the rate at which mass is absorbed at the origin.
//!
//! The process is `Y_t = z + W_t - alpha * L_t`, `L_t = P(tau <= t)`, with
//! `tau` the first time `Y` hits zero. Writing the surviving density with the
//! method of heat potentials turns the problem into two coupled singular
//! Volterra equations for a potential weight `nu(t)` and the loss rate
//! `g(t) = dL/dt`. This crate provides:
//!
//! * [`heat_potential`]: the one-way problem for a known drift `M(t)`.
//! * [`mckv`]: the coupled system, stepped with Newton–Raphson per node.
//! * [`perturbation`]: the first-order expansion in `alpha`.
//! * [`particles`]: an Euler particle system used as a Monte Carlo benchmark.
//! * [`closed_form`]: exact zero- and constant-drift solutions.
//! * [`analysis`]: calibration of `alpha`, conditional moments, convergence order.

// `!(x > 0.0)` guards deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod closed_form;
pub mod error;
pub mod heat_potential;
pub mod kernels;
pub mod mckv;
pub mod particles;
pub mod perturbation;
mod quadrature;

pub use error::{Error, Result};
pub use heat_potential::{DriftSpec, HeatPotentialSolution};
pub use kernels::GridSpec;
pub use mckv::{BlowUpCause, BlowUpReport, ProblemSpec, SolutionPath, SolverOptions};
pub use particles::{ParticleConfig, ParticleRun};
pub use perturbation::PerturbationSolution;

/// Worker threads used by the parallel routines in this process.
pub fn workers() -> usize {
    rayon::current_num_threads()
}
