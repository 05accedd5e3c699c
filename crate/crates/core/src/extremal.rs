//! Maximizer `W` of the VHLS quotient `J(u) = h(u)/(‖u‖₁^{a0}‖u‖_m^{b0})`
//! and the threshold-scaled member of its scaling family.
//!
//! The solver iterates the Euler–Lagrange map: with `W` normalized to
//! `‖W‖₁ = ‖W‖_m = 1`, `C = h(W)` and `φ` its plain potential,
//!
//! ```text
//! Ŵ = ((2φ − a0·C)_+ / (b0·C))^{1/(m−1)},   W ← normalize((1−ω)W + ωŴ),
//! ```
//!
//! halving `ω` whenever `J` would decrease. An Anderson extrapolation of the
//! undamped map is tried first and kept only if it increases `J`. Because
//! the shell kernel is homogeneous, normalization is an exact grid
//! rescaling and one kernel table serves every iterate.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{RadialField, RadialGrid};
use crate::functionals::{vhls_quotient, xstar_threshold, Thresholds};
use crate::math::{exp, pos_pow, powf};
use crate::params::{Exponents, ModelParams};
use crate::riesz::ReducedKernel;

/// Relative threshold below which a cell counts as outside the support.
pub const SUPPORT_CUTOFF: f64 = 1e-12;

/// Starting density of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Initialization {
    /// `(1 − r²)_+^{1/(m−1)}`
    Bump,
    /// `e^{−r²}`
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExtremalOptions {
    /// Relative change of `J` between iterates.
    pub tol_j: f64,
    /// Euler–Lagrange residual, see [`el_residual`].
    pub tol_res: f64,
    pub max_iter: usize,
    /// Initial damping `ω ∈ (0, 1]`.
    pub damping: f64,
    pub init: Initialization,
}

impl Default for ExtremalOptions {
    fn default() -> Self {
        ExtremalOptions { tol_j: 1e-10, tol_res: 1e-4, max_iter: 10_000, damping: 0.5, init: Initialization::Bump }
    }
}

impl ExtremalOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol_j > 0.0 && self.tol_res > 0.0) {
            return Err(Error::InvalidConfig("extremal tolerances must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig("extremal damping must lie in (0, 1]"));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("extremal max_iter must be positive"));
        }
        Ok(())
    }
}

/// A computed maximizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalProfile {
    /// `W` with `‖W‖₁ = ‖W‖_m = 1`, nonincreasing.
    pub w: RadialField,
    /// `C* = h(W) = J(W)`.
    pub cstar: f64,
    pub support_radius: f64,
    pub el_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `J` after every accepted iteration.
    pub j_history: Vec<f64>,
    pub params: ModelParams,
}

/// Runs the fixed-point iteration on a kernel built for `grid`.
pub fn solve_extremal(params: &ModelParams, grid: &RadialGrid, opts: &ExtremalOptions) -> Result<ExtremalProfile> {
    let kernel = ReducedKernel::for_params(grid, params)?;
    solve_extremal_with(params, grid, &kernel, opts)
}

/// As [`solve_extremal`] with a prebuilt (`ε = 0`) kernel covering `grid.n()`
/// cells.
pub fn solve_extremal_with(
    params: &ModelParams,
    grid: &RadialGrid,
    kernel: &ReducedKernel,
    opts: &ExtremalOptions,
) -> Result<ExtremalProfile> {
    if params.d != 3 {
        return Err(Error::UnsupportedDimension(params.d));
    }
    params.validate()?;
    opts.validate()?;
    if kernel.eps() != 0.0 || grid.n() > kernel.size() {
        return Err(Error::GridMismatch);
    }
    if grid.n() < 32 {
        return Err(Error::InvalidConfig("extremal solver needs at least 32 cells"));
    }
    let exps = params.exponents();
    match iterate(params, &exps, grid, kernel, opts)? {
        (profile, true) => Ok(profile),
        (profile, false) => Err(Error::NoConvergence { max_iter: opts.max_iter, best: Box::new(profile) }),
    }
}

/// Cells available to the support: a quarter of the grid.
///
/// `J` is invariant under the rescaling that normalization performs, so
/// only the number of cells across the support sets the resolution. Left
/// free, the iterate trades a sliver of tail for finer cells and creeps
/// outwards until it fills the grid; the cap fixes the resolution and turns
/// the problem into a maximization over densities on a fixed number of
/// cells.
pub fn support_cap(n: usize) -> usize {
    n / 4
}

fn initial_field(grid: &RadialGrid, exps: &Exponents, init: Initialization) -> Result<RadialField> {
    let cells = (grid.n() / 4) as f64;
    match init {
        Initialization::Bump => {
            let g = RadialGrid::with_spacing(grid.n(), 1.0 / cells)?;
            RadialField::from_fn(g, |r| pos_pow(1.0 - r * r, 1.0 / (exps.m - 1.0)))
        }
        Initialization::Gaussian => {
            let g = RadialGrid::with_spacing(grid.n(), 3.0 / cells)?;
            let mut values: Vec<f64> = g.centers().map(|r| exp(-r * r)).collect();
            values[grid.n() / 4..].iter_mut().for_each(|v| *v = 0.0);
            RadialField::new(g, values)
        }
    }
}

struct Step {
    cstar: f64,
    phi: Vec<f64>,
}

fn evaluate(w: &RadialField, kernel: &ReducedKernel) -> Result<Step> {
    let phi = kernel.plain_potential(w)?;
    let cstar = w.values().iter().zip(&phi).enumerate().map(|(i, (u, p))| u * p * w.grid().volume(i)).sum();
    Ok(Step { cstar, phi })
}

fn residual_from(w: &RadialField, step: &Step, exps: &Exponents) -> f64 {
    let c = step.cstar;
    let cut = SUPPORT_CUTOFF * w.linf();
    w.values()
        .iter()
        .zip(&step.phi)
        .filter(|(v, _)| **v > cut)
        .map(|(&v, &p)| (2.0 * p - exps.b0 * c * powf(v, exps.m - 1.0) - exps.a0 * c).abs())
        .fold(0.0, f64::max)
        / (exps.a0 * c)
}

fn normalize(u: &RadialField, exps: &Exponents) -> Result<RadialField> {
    let (w, _, _) = u.normalize_both_norms(exps.m)?;
    let peak = w.linf();
    let violated = w.values().windows(2).any(|p| p[1] - p[0] > 1e-12 * peak);
    Ok(if violated { w.rearrange_decreasing().normalize_both_norms(exps.m)?.0 } else { w })
}

fn iterate(
    params: &ModelParams,
    exps: &Exponents,
    grid: &RadialGrid,
    kernel: &ReducedKernel,
    opts: &ExtremalOptions,
) -> Result<(ExtremalProfile, bool)> {
    let cap = support_cap(grid.n());
    let mut w = normalize(&initial_field(grid, exps, opts.init)?, exps)?;
    let mut step = evaluate(&w, kernel)?;
    let mut j = vhls_quotient(&w, exps, kernel)?;
    let mut history = alloc::vec![j];
    let mut omega = opts.damping;
    let mut mixer = Anderson::new(ANDERSON_DEPTH);
    let inv = 1.0 / (exps.m - 1.0);
    let mut iterations = 0;
    let mut converged = false;
    let mut change = f64::INFINITY;

    while iterations < opts.max_iter {
        let residual = residual_from(&w, &step, exps);
        if change <= opts.tol_j * j && residual <= opts.tol_res {
            converged = true;
            break;
        }
        iterations += 1;
        let c = step.cstar;
        let target: Vec<f64> = step
            .phi
            .iter()
            .enumerate()
            .map(|(i, &p)| if i < cap { pos_pow((2.0 * p - exps.a0 * c) / (exps.b0 * c), inv) } else { 0.0 })
            .collect();
        let ascends = |cand_j: f64| cand_j >= j * (1.0 - 1e-13);

        let mut accepted = None;
        if let Some(extrapolated) = mixer.propose(w.values(), &target) {
            let cand = normalize(&RadialField::new(*w.grid(), extrapolated)?, exps)?;
            let cand_j = vhls_quotient(&cand, exps, kernel)?;
            if ascends(cand_j) {
                accepted = Some((cand, cand_j));
            } else {
                mixer.clear();
            }
        }
        let mut trial_omega = omega;
        while accepted.is_none() && trial_omega >= 1e-6 {
            let mixed: Vec<f64> =
                w.values().iter().zip(&target).map(|(a, b)| (1.0 - trial_omega) * a + trial_omega * b).collect();
            let cand = normalize(&RadialField::new(*w.grid(), mixed)?, exps)?;
            let cand_j = vhls_quotient(&cand, exps, kernel)?;
            if ascends(cand_j) {
                accepted = Some((cand, cand_j));
                omega = if trial_omega < omega { trial_omega } else { (2.0 * trial_omega).min(opts.damping) };
            }
            trial_omega *= 0.5;
        }
        let Some((cand, cand_j)) = accepted else {
            // no ascent direction left at working precision
            converged = residual <= opts.tol_res;
            break;
        };
        change = (cand_j - j).abs();
        step = evaluate(&cand, kernel)?;
        w = cand;
        j = cand_j;
        history.push(j);
    }

    let residual = residual_from(&w, &step, exps);
    let profile = ExtremalProfile {
        support_radius: w.support_radius(SUPPORT_CUTOFF).unwrap_or(0.0),
        cstar: j,
        el_residual: residual,
        iterations,
        converged: converged && residual <= opts.tol_res,
        j_history: history,
        params: *params,
        w,
    };
    let ok = profile.converged;
    Ok((profile, ok))
}

const ANDERSON_DEPTH: usize = 6;

/// Anderson extrapolation of the map `x ↦ g(x)` from the last few
/// residuals `f = g(x) − x`, in cell-index coordinates.
struct Anderson {
    depth: usize,
    last: Option<(Vec<f64>, Vec<f64>)>,
    dx: VecDeque<Vec<f64>>,
    df: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson { depth, last: None, dx: VecDeque::new(), df: VecDeque::new() }
    }

    fn clear(&mut self) {
        self.last = None;
        self.dx.clear();
        self.df.clear();
    }

    /// Records `(x, g(x))` and returns the extrapolated iterate, once at
    /// least one difference is available.
    fn propose(&mut self, x: &[f64], gx: &[f64]) -> Option<Vec<f64>> {
        let f: Vec<f64> = gx.iter().zip(x).map(|(g, v)| g - v).collect();
        if let Some((px, pf)) = self.last.take() {
            self.dx.push_back(x.iter().zip(&px).map(|(a, b)| a - b).collect());
            self.df.push_back(f.iter().zip(&pf).map(|(a, b)| a - b).collect());
            if self.dx.len() > self.depth {
                self.dx.pop_front();
                self.df.pop_front();
            }
        }
        self.last = Some((x.to_vec(), f.clone()));
        let k = self.df.len();
        if k == 0 {
            return None;
        }
        // normal equations of min ‖f − ΔF γ‖ with a small ridge
        let mut gram = alloc::vec![0.0; k * k];
        let mut rhs = alloc::vec![0.0; k];
        for a in 0..k {
            for b in 0..=a {
                let dot: f64 = self.df[a].iter().zip(&self.df[b]).map(|(p, q)| p * q).sum();
                gram[a * k + b] = dot;
                gram[b * k + a] = dot;
            }
            rhs[a] = self.df[a].iter().zip(&f).map(|(p, q)| p * q).sum();
        }
        let trace: f64 = (0..k).map(|a| gram[a * k + a]).sum();
        if !(trace > 0.0) {
            return None;
        }
        (0..k).for_each(|a| gram[a * k + a] += 1e-10 * trace);
        let gamma = solve_dense(&mut gram, &mut rhs, k)?;
        let mut next: Vec<f64> = x.iter().zip(&f).map(|(v, r)| v + r).collect();
        for (a, g) in gamma.iter().enumerate() {
            for (i, out) in next.iter_mut().enumerate() {
                *out -= g * (self.dx[a][i] + self.df[a][i]);
            }
        }
        next.iter_mut().for_each(|v| *v = v.max(0.0));
        next.iter().any(|&v| v > 0.0).then_some(next)
    }
}

/// Gaussian elimination with partial pivoting on a row-major `k × k` system.
fn solve_dense(a: &mut [f64], b: &mut [f64], k: usize) -> Option<Vec<f64>> {
    for col in 0..k {
        let pivot = (col..k).max_by(|&p, &q| a[p * k + col].abs().total_cmp(&a[q * k + col].abs()))?;
        if a[pivot * k + col] == 0.0 {
            return None;
        }
        if pivot != col {
            for c in 0..k {
                a.swap(pivot * k + c, col * k + c);
            }
            b.swap(pivot, col);
        }
        for row in col + 1..k {
            let factor = a[row * k + col] / a[col * k + col];
            for c in col..k {
                a[row * k + c] -= factor * a[col * k + c];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = alloc::vec![0.0; k];
    for row in (0..k).rev() {
        let tail: f64 = (row + 1..k).map(|c| a[row * k + c] * x[c]).sum();
        x[row] = (b[row] - tail) / a[row * k + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `sup_{support} |2φ − b0·C·w^{m−1} − a0·C| / (a0·C)` for a normalized `w`.
pub fn el_residual(w: &RadialField, cstar: f64, exps: &Exponents, kernel: &ReducedKernel) -> Result<f64> {
    if w.is_zero() {
        return Err(Error::ZeroField);
    }
    let phi = kernel.plain_potential(w)?;
    Ok(residual_from(w, &Step { cstar, phi }, exps))
}

/// `x_*` and `g(x_*)` from a converged profile.
pub fn compute_thresholds(profile: &ExtremalProfile, exps: &Exponents) -> Result<Thresholds> {
    if !profile.converged {
        return Err(Error::NotConverged);
    }
    xstar_threshold(exps, profile.cstar)
}

/// The member `αW(λx)` of the extremal family with `‖·‖_∞ = 1` and
/// `‖·‖₁^a‖·‖_m^m = x_*`.
///
/// With `α = 1/W(0)` the product is `α^{a+m} λ^{−d(a+1)}`, which fixes `λ`.
/// The result is represented exactly, on the grid stretched by `1/λ`.
pub fn threshold_profile(profile: &ExtremalProfile, exps: &Exponents) -> Result<RadialField> {
    let t = compute_thresholds(profile, exps)?;
    let w = &profile.w;
    let alpha = 1.0 / w.linf();
    let d = f64::from(exps.d);
    // account for the (rounding-level) deviation of the norms from 1
    let x_w = pos_pow(w.mass(), exps.a) * w.integral_of_power(exps.m);
    let lambda = powf(powf(alpha, exps.a + exps.m) * x_w / t.x_star, 1.0 / (d * (exps.a + 1.0)));
    w.rescaled(alpha, lambda)
}
