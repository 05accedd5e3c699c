#![no_std]

//! Radial numerics for the aggregation-diffusion equation
//!
//! ```text
//! u_t = Δu^m − ∇·(u ∇c),    c = (−Δ)^{−s} u = c_{d,s} ∫ u(y) |x − y|^{−(d−2s)} dy
//! ```
//!
//! in the supercritical range `2d/(d+2s) < m < 2 − 2s/d`, `2 < 2s < d`.
//!
//! The crate is `no_std` (it needs `alloc`) and carries only the numerical
//! core: parameter and exponent bookkeeping, radial finite-volume fields,
//! the Riesz interaction kernel on spherical shells, the energy functionals,
//! the extremal-function solver, the time integrator and the threshold
//! classifier. File formats and the command-line driver live in the
//! `aggdiff` crate.
//!
//! Formula code is written for general `d`; everything that needs the radial
//! reduction of the kernel (potentials, interaction energies, time stepping)
//! is restricted to `d = 3`.

extern crate alloc;

pub mod classify;
pub mod error;
pub mod evolve;
pub mod extremal;
pub mod field;
pub mod functionals;
pub mod params;
pub mod quadrature;
pub mod riesz;
pub mod special;

mod math;

pub use classify::{barrier_check, classify, BarrierReport, Classification, Margins, Verdict};
pub use error::{Error, Inequality, Result};
pub use evolve::{hypothesis_check, run, virial_check, HypothesisReport, Outcome, SimConfig, SimRecord, SimTrace, Stepper};
pub use extremal::{
    compute_thresholds, el_residual, solve_extremal, solve_extremal_with, threshold_profile, ExtremalOptions,
    ExtremalProfile, Initialization,
};
pub use field::{RadialField, RadialGrid};
pub use functionals::{EnergyReport, Thresholds};
pub use params::{hls_sharp_constant, riesz_constant, Exponents, ModelParams};
pub use riesz::ReducedKernel;
