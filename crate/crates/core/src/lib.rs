//! Stochastic-numerics toolkit for one-dimensional mean-field particle
//! systems absorbed at zero.
//!
//! The crate simulates the interacting system
//!
//! ```text
//! dX^i = 1{X^i > 0} [ (1/N) Σ_j b(t, X^i, X^j) 1{X^j > 0} dt + √2 dW^i ]
//! ```
//!
//! solves the nonlinear Fokker-Planck equation satisfied by its large-N
//! limit on the half-line with an absorbing boundary, and provides the
//! estimators and metrics needed to check that the two descriptions agree
//! (propagation of chaos, martingale residuals, Girsanov weights, the
//! boundary-flux and survival-representation identities).
//!
//! Modules follow the problem structure:
//!
//! - [`kernels`] — interaction kernels `b`, the mean-field drift, the
//!   empirical drift and the smooth indicator used to regularize `1{x>0}`.
//! - [`measures`] — empirical measures, grid densities with an atom at the
//!   origin, Wasserstein-1 and flow metrics, Hölder seminorms.
//! - [`particle`] — Euler-Maruyama simulation of the absorbed system with
//!   per-particle counter-based RNG streams, reference (partially
//!   decoupled) systems and exponential Girsanov weights.
//! - [`fpe`] — linear and nonlinear Fokker-Planck solvers with Dirichlet
//!   absorption, one-sided boundary flux, parametrix transition densities
//!   and the survival-representation residual.
//! - [`meanfield`] — the flow operator whose fixed point is the mean-field
//!   law, a damped Picard iteration, and stopped-Brownian-motion oracles.
//! - [`harness`] — experiment orchestration: chaos sweeps, martingale
//!   residual estimators, the validation suite and report/manifest output.

pub mod fpe;
pub mod harness;
pub mod kernels;
pub mod meanfield;
pub mod measures;
pub mod particle;
pub mod quad;
pub mod stats;
pub mod streams;
pub mod tables;

pub use fpe::{FpeConfig, FrozenDrift, Scheme};
pub use kernels::{KernelFamily, KernelSpec, SmoothIndicatorParam};
pub use measures::{DensityFlow, EmpiricalMeasure, SurvivalCurve};
pub use meanfield::FlowPair;
pub use particle::{InitialLaw, ParticlePaths, SimConfig};
