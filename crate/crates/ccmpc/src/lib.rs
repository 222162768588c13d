//! Closed-loop simulation of an isolated offshore hybrid power system
//! (a cluster of gas-turbine generators, one wind turbine, one battery)
//! under four economic nonlinear MPC formulations, two of which use
//! complementarity penalties to expose the semi-continuous operating
//! region of the gas turbines to the optimizer.
//!
//! The stack is self-hosted: transcription produces sparse nonlinear
//! programs whose derivatives come from the forward-mode AD in
//! [`autodiff`] and which are solved by the primal-dual interior-point
//! method in [`nlp`]. No external modelling language or solver is used.
//!
//! Layering, bottom to top:
//!
//! * [`plant`] — continuous-time component models (GTG cascade, battery,
//!   wind power curve) shared verbatim by the simulation plant and the
//!   controller model (no plant-model mismatch).
//! * [`autodiff`] — batched dual numbers, gradients, sparse Jacobians.
//! * [`nlp`] — interior-point solver for smooth NLPs with equalities,
//!   inequalities and variable bounds.
//! * [`ocp`] — direct multiple-shooting transcription of the four
//!   controller formulations, warm-start shifting, policy extraction.
//! * [`scenario`] — wind ingestion and stochastic demand generation.
//! * [`sim`] — receding-horizon closed loop and KPI computation.
//! * [`config`] / [`cli`] — schema-validated configuration and the
//!   command-line drivers.
//!
//! The `examples/` directory has one runnable program per capability;
//! start with `cargo run --example closed_loop` and the README.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod nlp;
pub mod ocp;
pub mod plant;
pub mod rng;
pub mod scenario;
pub mod sim;
