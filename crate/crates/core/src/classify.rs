//! The threshold decision rule for initial data below the energy barrier,
//! and a check of recorded runs against the product barrier.

use crate::error::Result;
use crate::evolve::SimTrace;
use crate::field::RadialField;
use crate::functionals::{free_energy, Thresholds};
use crate::math::pos_pow;
use crate::params::Exponents;
use crate::riesz::ReducedKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Verdict {
    GlobalExistence,
    FiniteTimeBlowup,
    /// The energy hypothesis fails or the product lies inside the band.
    Indeterminate,
}

/// Signed relative distances; positive means below the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Margins {
    /// `(x_* − product)/x_*`
    pub product: f64,
    /// `(g(x_*) − ‖u0‖₁^a F(u0))/|g(x_*)|`
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Classification {
    pub verdict: Verdict,
    /// `‖u0‖₁^a ‖u0‖_m^m`
    pub product: f64,
    pub x_star: f64,
    /// `‖u0‖₁^a F(u0)`
    pub energy_lhs: f64,
    pub g_at_xstar: f64,
    /// `energy_lhs < g(x_*)`
    pub energy_ok: bool,
    pub margins: Margins,
}

/// Applies the rule: below the energy barrier, a product below `x_*`
/// (by more than `tol` relative) predicts global existence and one above
/// predicts blow-up; everything else is indeterminate.
pub fn classify(
    u0: &RadialField,
    thresholds: &Thresholds,
    exps: &Exponents,
    kernel: &ReducedKernel,
    tol: f64,
) -> Result<Classification> {
    let mass_a = pos_pow(u0.mass(), exps.a);
    let product = mass_a * u0.integral_of_power(exps.m);
    let energy_lhs = mass_a * free_energy(u0, exps, kernel)?;
    let (x_star, g) = (thresholds.x_star, thresholds.g_at_xstar);
    let energy_ok = energy_lhs < g;
    let margins = Margins { product: (x_star - product) / x_star, energy: (g - energy_lhs) / g.abs() };
    let verdict = match (energy_ok, margins.product) {
        (true, p) if p > tol => Verdict::GlobalExistence,
        (true, p) if p < -tol => Verdict::FiniteTimeBlowup,
        _ => Verdict::Indeterminate,
    };
    Ok(Classification { verdict, product, x_star, energy_lhs, g_at_xstar: g, energy_ok, margins })
}

/// Range of `‖u‖₁^a ‖u‖_m^m / x_*` over the records of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BarrierReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub records: usize,
}

impl BarrierReport {
    /// The product never crossed `x_*` in the direction the verdict forbids.
    pub fn consistent_with(&self, verdict: Verdict) -> bool {
        match verdict {
            Verdict::GlobalExistence => self.max_ratio < 1.0,
            Verdict::FiniteTimeBlowup => self.min_ratio > 1.0,
            Verdict::Indeterminate => true,
        }
    }

    /// `max_ratio − min_ratio`
    pub fn spread(&self) -> f64 {
        self.max_ratio - self.min_ratio
    }
}

pub fn barrier_check(trace: &SimTrace, thresholds: &Thresholds, exps: &Exponents) -> BarrierReport {
    let (min_ratio, max_ratio) = trace
        .records
        .iter()
        .map(|r| pos_pow(r.mass, exps.a) * pos_pow(r.lm_norm, exps.m) / thresholds.x_star)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    BarrierReport { min_ratio, max_ratio, records: trace.records.len() }
}
