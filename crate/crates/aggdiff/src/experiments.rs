//! Computations shared by the commands and the self-test battery.

use aggdiff_core::evolve::characteristic_time;
use aggdiff_core::extremal::SUPPORT_CUTOFF;
use aggdiff_core::{
    barrier_check, classify, compute_thresholds, run, solve_extremal_with, threshold_profile, BarrierReport,
    Classification, Exponents, ExtremalOptions, ExtremalProfile, ModelParams, Outcome, RadialField, RadialGrid,
    ReducedKernel, Result, SimConfig, SimTrace, Thresholds, Verdict,
};
use serde::Serialize;

/// A solved extremal problem together with the threshold profile placed on
/// an evolution grid.
#[derive(Debug, Clone)]
pub struct ThresholdSetup {
    pub params: ModelParams,
    pub exps: Exponents,
    pub extremal: ExtremalProfile,
    pub thresholds: Thresholds,
    /// `‖·‖_∞ = 1`, product `x_*`, zero-padded to `padding` support radii.
    pub profile: RadialField,
    pub kernel: ReducedKernel,
}

/// Solves the extremal problem on `n` cells and pads the threshold profile
/// with zeros, at unchanged spacing, out to `padding` times its support.
///
/// Padding keeps the profile exact; interpolating onto a new grid would
/// shift the product off `x_*`.
pub fn threshold_setup(
    params: &ModelParams,
    n: usize,
    r_max: f64,
    opts: &ExtremalOptions,
    padding: f64,
) -> Result<ThresholdSetup> {
    params.validate()?;
    let exps = params.exponents();
    let grid = RadialGrid::new(n, r_max)?;
    let kernel = ReducedKernel::for_params(&grid, params)?;
    let extremal = solve_extremal_with(params, &grid, &kernel, opts)?;
    let thresholds = compute_thresholds(&extremal, &exps)?;
    let w = threshold_profile(&extremal, &exps)?;
    let last = w.last_support_cell(SUPPORT_CUTOFF).unwrap_or(0);
    let cells = ((last + 1) as f64 * padding).ceil() as usize;
    let profile = w.resized(cells.max(last + 2));
    let kernel = ReducedKernel::for_params(profile.grid(), params)?;
    Ok(ThresholdSetup { params: *params, exps, extremal, thresholds, profile, kernel })
}

/// One initial amplitude of the dichotomy experiment.
#[derive(Debug, Clone)]
pub struct DichotomyRow {
    pub kappa: f64,
    pub classification: Classification,
    pub trace: SimTrace,
    pub barrier: BarrierReport,
    /// The run agrees with the verdict and never crossed the barrier the
    /// wrong way; always true for an indeterminate verdict.
    pub consistent: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DichotomySummary {
    pub kappa: f64,
    pub classification: Classification,
    pub outcome: Outcome,
    pub steps: usize,
    pub max_linf: f64,
    pub mass_drift: f64,
    pub barrier: BarrierReport,
    pub consistent: bool,
}

impl DichotomyRow {
    pub fn summary(&self) -> DichotomySummary {
        DichotomySummary {
            kappa: self.kappa,
            classification: self.classification,
            outcome: self.trace.outcome,
            steps: self.trace.steps,
            max_linf: self.trace.max_linf(),
            mass_drift: self.trace.mass_drift(),
            barrier: self.barrier,
            consistent: self.consistent,
        }
    }
}

/// `sim.t_end` or, when `t_end_factor` is given, that many characteristic
/// times of the threshold profile.
pub fn dichotomy_horizon(setup: &ThresholdSetup, sim: &SimConfig, t_end_factor: Option<f64>) -> Result<f64> {
    Ok(match t_end_factor {
        Some(f) => f * characteristic_time(&setup.profile, &setup.exps)?,
        None => sim.t_end,
    })
}

/// Classifies and evolves `κ·W_thr` for every `κ`.
pub fn run_dichotomy(setup: &ThresholdSetup, kappas: &[f64], sim: &SimConfig, tol: f64) -> Result<Vec<DichotomyRow>> {
    kappas
        .iter()
        .map(|&kappa| {
            let u0 = setup.profile.scaled(kappa)?;
            let classification = classify(&u0, &setup.thresholds, &setup.exps, &setup.kernel, tol)?;
            let trace = run(&u0, &setup.kernel, &setup.exps, sim)?;
            let barrier = barrier_check(&trace, &setup.thresholds, &setup.exps);
            let consistent = match classification.verdict {
                Verdict::GlobalExistence => trace.outcome == Outcome::CompletedBounded,
                Verdict::FiniteTimeBlowup => matches!(trace.outcome, Outcome::BlowupDetected(_)),
                Verdict::Indeterminate => true,
            } && barrier.consistent_with(classification.verdict);
            Ok(DichotomyRow { kappa, classification, trace, barrier, consistent })
        })
        .collect()
}
