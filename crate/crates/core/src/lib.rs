//! Finite-alphabet toolkit for two-way lossy source-channel coding.
//!
//! The crate is organized bottom-up:
//!
//! * [`prob`] — exact finite-probability arithmetic and information measures,
//!   generic over the scalar type (`f32`/`f64` via `num-traits`);
//! * [`rd`] — standard, Wyner-Ziv, and conditional rate-distortion solvers
//!   with an independent brute-force oracle;
//! * [`twc`] — discrete memoryless two-way channels and Shannon inner/outer
//!   capacity-bound frontiers;
//! * [`config`] — the coded-channel Markov chain: stationary analysis,
//!   achievability margins, and the four special-case configurations;
//! * [`regions`] — achievable-distortion regions and outer bounds;
//! * [`sim`] — Monte Carlo simulation of adaptive block transmission.
//!
//! All information quantities are in bits (log base 2).

pub mod config;
pub mod prob;
pub mod rd;
pub mod regions;
pub mod sim;
pub mod twc;

/// Scalar type used by the solvers and everything above the probability core.
pub type Real = f64;

/// One-dimensional pmf over `Real`.
pub type Pmf = prob::FinitePmf<Real>;
/// Multi-axis joint pmf over `Real`.
pub type Joint = prob::JointPmf<Real>;
/// Conditional pmf over `Real`.
pub type Cond = prob::CondPmf<Real>;
