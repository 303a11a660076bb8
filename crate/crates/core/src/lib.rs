//! Nonmonotone stochastic line-search optimizers for finite-sum problems.
//!
//! The crate is organised around the pieces of one optimizer iteration:
//!
//! - [`problems`]: finite-sum objectives with mini-batch oracles and generators
//!   for problems that satisfy interpolation (every per-sample loss vanishes at a
//!   common point).
//! - [`linesearch`]: the backtracking engine and the reference values it compares
//!   against (monotone, Zhang–Hager, cross-batch and single-batch Grippo).
//! - [`stepsize`]: initial step policies (Polyak, SPS smoothing, geometric growth,
//!   gradient-ratio resets) and the backtrack-count reset exponent.
//! - [`optim`]: the optimizer loop, preconditioned variants, SGD/Adam baselines and
//!   the epoch-level experiment runner.
//! - [`analysis`]: convergence-rate certificates, geometric rate fits and the
//!   run-level invariant verifier.
//! - [`config`] and [`telemetry`]: run configuration files and CSV/JSON outputs.

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod linesearch;
pub mod optim;
pub mod problems;
pub mod seed;
pub mod stepsize;
pub mod telemetry;
pub mod vecops;

pub use linesearch::{LineSearchError, LineSearchOutcome, NonmonotoneState, ReferencePolicy};
pub use optim::{Optimizer, OptimizerSettings, RunRecord, StepError};
pub use problems::{FiniteSumProblem, MiniBatchSchedule, ProblemError, ProblemMeta};
