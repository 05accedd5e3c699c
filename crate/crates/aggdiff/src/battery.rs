//! The self-test battery: one check per acceptance criterion.
//!
//! `Quick` keeps every criterion but uses coarser grids and skips the
//! refinement studies; `Full` runs everything at the stated resolutions.

use std::f64::consts::PI;

use aggdiff_core::evolve::characteristic_time;
use aggdiff_core::extremal::SUPPORT_CUTOFF;
use aggdiff_core::functionals::{barrier_g, chemical_potential, energy_report, hls_quotient, vhls_quotient};
use aggdiff_core::special::gamma;
use aggdiff_core::{
    el_residual, hls_sharp_constant, run, solve_extremal_with, virial_check, ExtremalOptions, Initialization,
    ModelParams, Outcome, RadialField, RadialGrid, ReducedKernel, Result, SimConfig, Verdict,
};
use quadrature::double_exponential::integrate as de;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::experiments::{run_dichotomy, threshold_setup, DichotomyRow, ThresholdSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scale {
    Quick,
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct BatteryOptions {
    pub scale: Scale,
    pub seed: u64,
    /// Multiplies every kernel weight; a test hook for fault injection.
    pub corrupt_kernel: Option<f64>,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions { scale: Scale::Quick, seed: 0, corrupt_kernel: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub criterion: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "exponent arithmetic"),
    (2, "riesz oracle equivalence"),
    (3, "hls bound"),
    (4, "scale invariance"),
    (5, "extremal convergence"),
    (6, "threshold identities"),
    (7, "conservation and energy"),
    (8, "virial consistency"),
    (9, "dichotomy"),
    (10, "amplitude peak"),
];

/// Extremal grid whose padded threshold profile gets 512 evolution cells.
const BASE_CELLS: usize = 256;
const KAPPA_LOW: f64 = 0.8;
const KAPPA_HIGH: f64 = 1.2;
/// Horizon of the dichotomy runs in characteristic times.
const HORIZON: f64 = 10.0;

fn reference() -> ModelParams {
    ModelParams { d: 3, s: 1.1, m: 1.2, eps: 0.0 }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn outcome(passed: bool, detail: String) -> Result<(bool, String)> {
    Ok((passed, detail))
}

pub struct Battery {
    opts: BatteryOptions,
    params: ModelParams,
    setup: Option<ThresholdSetup>,
    dichotomy: Option<Vec<DichotomyRow>>,
}

impl Battery {
    pub fn new(opts: BatteryOptions) -> Self {
        Battery { opts, params: reference(), setup: None, dichotomy: None }
    }

    fn full(&self) -> bool {
        self.opts.scale == Scale::Full
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        rng.set_stream(stream);
        rng
    }

    fn kernel(&self, grid: &RadialGrid) -> Result<ReducedKernel> {
        let k = ReducedKernel::for_params(grid, &self.params)?;
        Ok(match self.opts.corrupt_kernel {
            Some(f) => k.corrupted(f),
            None => k,
        })
    }

    fn setup(&mut self) -> Result<&ThresholdSetup> {
        if self.setup.is_none() {
            let mut s = threshold_setup(&self.params, BASE_CELLS, 4.0, &ExtremalOptions::default(), 8.0)?;
            s.kernel = self.kernel(s.profile.grid())?;
            self.setup = Some(s);
        }
        Ok(self.setup.as_ref().unwrap())
    }

    fn dichotomy(&mut self) -> Result<&[DichotomyRow]> {
        if self.dichotomy.is_none() {
            let setup = self.setup()?.clone();
            let sim = dichotomy_config(&setup)?;
            self.dichotomy = Some(run_dichotomy(&setup, &[KAPPA_LOW, KAPPA_HIGH], &sim, 1e-3)?);
        }
        Ok(self.dichotomy.as_deref().unwrap())
    }

    /// Runs one criterion; errors count as failures.
    pub fn check(&mut self, criterion: u8) -> Check {
        let name = CRITERIA.iter().find(|c| c.0 == criterion).map_or("unknown", |c| c.1);
        let result = match criterion {
            1 => self.exponents(),
            2 => self.riesz_oracles(),
            3 => self.hls_bound(),
            4 => self.scale_invariance(),
            5 => self.extremal(),
            6 => self.threshold_identities(),
            7 => self.conservation(),
            8 => self.virial(),
            9 => self.dichotomy_check(),
            10 => self.amplitude_peak(),
            _ => outcome(false, "no such criterion".into()),
        };
        let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        Check { criterion, name, passed, detail }
    }

    /// Every criterion in order, reporting each as soon as it finishes.
    pub fn run_all(&mut self, mut report: impl FnMut(&Check)) -> Vec<Check> {
        CRITERIA
            .iter()
            .map(|&(id, _)| {
                let c = self.check(id);
                report(&c);
                c
            })
            .collect()
    }

    fn exponents(&mut self) -> Result<(bool, String)> {
        let e = self.params.exponents();
        let want = [(e.a, 1.2), (e.a0, 0.4), (e.b0, 1.6), (e.beta, 4.0 / 3.0), (e.p, 12.0 / 11.0), (e.lambda, 0.8)];
        let exact = want.iter().map(|(got, w)| (got - w).abs()).fold(0.0, f64::max);

        let mut rng = self.rng(1);
        let mut worst = 0.0f64;
        let mut count = 0;
        while count < 1000 {
            let d: u32 = rng.gen_range(3..=8);
            let df = f64::from(d);
            let s = rng.gen_range(1.0..0.5 * df);
            let m = rng.gen_range(2.0 * df / (df + 2.0 * s)..2.0 - 2.0 * s / df);
            let p = ModelParams { d, s, m, eps: 0.0 };
            if p.validate().is_err() {
                continue;
            }
            let x = p.exponents();
            let id1 = (x.b0 - x.m * x.beta).abs() / x.b0.abs().max((x.m * x.beta).abs());
            let big = x.a.abs().max(x.a0.abs()).max((x.a * x.beta).abs());
            let id2 = (x.a + x.a0 - x.a * x.beta).abs() / big;
            worst = worst.max(id1).max(id2);
            count += 1;
        }
        outcome(exact <= 1e-12 && worst <= 1e-14, format!("reference error {exact:.1e}, identities {worst:.1e} over 1000 triples"))
    }

    fn riesz_oracles(&mut self) -> Result<(bool, String)> {
        let n = if self.full() { 1024 } else { 512 };
        let e = self.params.exponents();
        let l = e.lambda;
        let c = e.c_ds;
        let mut worst = 0.0f64;

        let g = RadialGrid::new(n, 8.0)?;
        let k = self.kernel(&g)?;
        let u = RadialField::from_fn(g, |r| (-r * r).exp())?;
        let pot = k.potential(&u, c)?;
        for i in [0, n / 16, n / 8, n / 4, n / 2] {
            worst = worst.max(rel(pot.values()[i], c * gaussian_potential_oracle(g.center(i), l)));
        }
        let h_gauss = (PI / 2.0).powf(1.5) * 4.0 * PI * 2f64.powf((1.0 - l) / 2.0) * gamma((3.0 - l) / 2.0);
        worst = worst.max(rel(k.interaction(&u)?, h_gauss));

        let radius = 1.5;
        let g = RadialGrid::new(n, 2.0 * radius)?;
        let k = self.kernel(&g)?;
        let u = RadialField::from_fn(g, |r| if r < radius { 1.0 } else { 0.0 })?;
        let pot = k.potential(&u, c)?;
        for i in [0, n / 8, n / 4, n / 2 - 1, n / 2, 3 * n / 4, n - 1] {
            worst = worst.max(rel(pot.values()[i], c * ball_potential_oracle(g.center(i), radius, l)));
        }
        worst = worst.max(rel(k.interaction(&u)?, ball_interaction(radius, l)));
        outcome(worst <= 1e-3, format!("largest relative deviation {worst:.2e} at n = {n}"))
    }

    fn hls_bound(&mut self) -> Result<(bool, String)> {
        let e = self.params.exponents();
        let bound = hls_sharp_constant(3, e.lambda)?;
        let g = RadialGrid::new(256, 4.0)?;
        let k = self.kernel(&g)?;
        let mut rng = self.rng(3);
        let (mut violations, mut largest) = (0, 0.0f64);
        for _ in 0..100 {
            let u = random_density(&mut rng, g)?;
            let j = vhls_quotient(&u, &e, &k)?;
            let q = hls_quotient(&u, &e, &k)?;
            largest = largest.max(j).max(q);
            if j > bound || q > bound {
                violations += 1;
            }
        }
        outcome(violations == 0, format!("{violations} violations, largest quotient {largest:.6} against C = {bound:.6}"))
    }

    fn scale_invariance(&mut self) -> Result<(bool, String)> {
        let e = self.params.exponents();
        let g = RadialGrid::new(256, 6.0)?;
        let k = self.kernel(&g)?;
        let mut rng = self.rng(4);
        let fields = [RadialField::from_fn(g, |r| (-r * r).exp())?, random_density(&mut rng, g)?];
        let mut worst = 0.0f64;
        for u in &fields {
            let base = energy_report(u, &e, &k)?;
            let j = base.vhls_quotient.unwrap_or(f64::NAN);
            for alpha in [0.1, 1.0, 7.0] {
                for lambda in [0.3, 1.0, 3.0] {
                    let v = u.rescaled(alpha, lambda)?;
                    worst = worst.max(rel(vhls_quotient(&v, &e, &k)?, j));
                }
            }
            for lambda in [0.3, 0.5, 2.0, 3.0] {
                let v = energy_report(&u.apply_dynamic_scaling(lambda, &e)?, &e, &k)?;
                worst = worst.max(rel(v.product, base.product)).max(rel(v.barrier, base.barrier));
            }
        }
        outcome(worst <= 1e-6, format!("largest relative change {worst:.2e}"))
    }

    fn extremal(&mut self) -> Result<(bool, String)> {
        let params = self.params;
        let e = params.exponents();
        let grid = RadialGrid::new(BASE_CELLS, 4.0)?;
        let k = self.kernel(&grid)?;
        let bump = self.setup()?.extremal.clone();
        let opts = ExtremalOptions { init: Initialization::Gaussian, ..Default::default() };
        let gauss = solve_extremal_with(&params, &grid, &k, &opts)?;
        let spread = rel(gauss.cstar, bump.cstar);
        let residual = el_residual(&bump.w, bump.cstar, &e, &k)?.max(gauss.el_residual);

        let last = bump.w.last_support_cell(SUPPORT_CUTOFF).unwrap_or(grid.n() - 1);
        let shape = bump.w.is_nonincreasing() && gauss.w.is_nonincreasing() && last + 1 < grid.n();

        let mut rng = self.rng(5);
        let mut best_trial = 0.0f64;
        for t in 0..20 {
            let u = trial_density(t, &mut rng, grid)?;
            best_trial = best_trial.max(vhls_quotient(&u, &e, &k)?);
        }
        let mut passed = spread <= 1e-4 && residual <= 1e-4 && shape && best_trial <= bump.cstar;
        let mut detail = format!(
            "C* = {:.10}, inits differ {spread:.1e}, residual {residual:.1e}, best trial {best_trial:.6}, support {} of {} cells",
            bump.cstar,
            last + 1,
            grid.n()
        );
        if self.full() {
            let fine: Vec<f64> = [1024, 2048]
                .iter()
                .map(|&n| {
                    let g = RadialGrid::new(n, 4.0)?;
                    Ok(solve_extremal_with(&params, &g, &self.kernel(&g)?, &ExtremalOptions::default())?.cstar)
                })
                .collect::<Result<_>>()?;
            let change = rel(fine[0], fine[1]);
            passed &= change <= 1e-3;
            detail.push_str(&format!(", refinement 1024 to 2048 changes C* by {change:.1e}"));
        }
        outcome(passed, detail)
    }

    fn threshold_identities(&mut self) -> Result<(bool, String)> {
        let s = self.setup()?;
        let e = s.exps;
        let t = s.thresholds;
        let (x, d) = (t.x_star, f64::from(e.d));
        let step = 1e-5 * x;
        let slope = (barrier_g(x + step, &e, t.cstar) - barrier_g(x - step, &e, t.cstar)) / (2.0 * step);
        let slope = slope.abs() * (e.m - 1.0);
        let coefficient = 2.0 * d - 2.0 * e.lambda / (e.m - 1.0);
        let identity = (2.0 * e.lambda * t.g_at_xstar + coefficient * x).abs() / (coefficient * x).abs();

        let rep = energy_report(&s.profile, &e, &s.kernel)?;
        let int_m = s.profile.integral_of_power(e.m);
        let steady = (2.0 * e.lambda * rep.free_energy + coefficient * int_m).abs() / (coefficient * int_m).abs();
        let mu = chemical_potential(&s.profile, &e, &s.kernel)?;
        let on: Vec<f64> = mu.iter().zip(s.profile.values()).filter(|(_, v)| **v > 0.0).map(|(m, _)| *m).collect();
        let (lo, hi) = on.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &m| (a.min(m), b.max(m)));
        let scale = on.iter().fold(0.0f64, |a, m| a.max(m.abs()));
        let mu_spread = (hi - lo) / scale;
        outcome(
            slope <= 1e-8 && identity <= 1e-10 && steady <= 1e-3 && mu_spread <= 1e-3,
            format!("g'(x*) {slope:.1e}, identity {identity:.1e}, steady state {steady:.1e}, mu spread {mu_spread:.1e}"),
        )
    }

    fn conservation(&mut self) -> Result<(bool, String)> {
        let e = self.params.exponents();
        let n = if self.full() { 512 } else { 256 };
        let g = RadialGrid::new(n, 8.0)?;
        let k = self.kernel(&g)?;
        let u = RadialField::from_fn(g, |r| 0.2 * (-r * r).exp())?;
        let cfg = SimConfig { t_end: 2.0, record_every: 1, ..Default::default() };
        let smooth = run(&u, &k, &e, &cfg)?;
        let (decay, dissipated) = smooth.energy_balance();
        let balance = rel(dissipated, decay);
        let mut drift = smooth.mass_drift();
        let mut increase = smooth.max_energy_increase();
        for row in self.dichotomy()? {
            drift = drift.max(row.trace.mass_drift());
            increase = increase.max(row.trace.max_energy_increase());
        }
        outcome(
            smooth.outcome == Outcome::CompletedBounded && drift <= 1e-8 && increase <= 1e-6 && balance <= 0.1,
            format!("mass drift {drift:.1e}, largest F increase {increase:.1e}, dissipation balance {balance:.2e}"),
        )
    }

    fn virial(&mut self) -> Result<(bool, String)> {
        let e = self.params.exponents();
        let n = if self.full() { 2048 } else { 1024 };
        let g = RadialGrid::new(n, 6.0)?;
        let k = self.kernel(&g)?;
        let u = RadialField::from_fn(g, |r| (-r * r).exp())?;
        let (lhs, rhs) = virial_check(&u, &e, &k)?;
        let smooth = rel(lhs, rhs);

        let s = self.setup()?;
        let (_, rhs) = virial_check(&s.profile, &s.exps, &s.kernel)?;
        let scale = (s.exps.virial_coefficient() * s.profile.integral_of_power(s.exps.m)).abs();
        let threshold = rhs.abs() / scale;
        outcome(
            smooth <= 0.02 && threshold <= 1e-3,
            format!("smooth data mismatch {smooth:.2e} at n = {n}, threshold right-hand side {threshold:.1e}"),
        )
    }

    fn dichotomy_check(&mut self) -> Result<(bool, String)> {
        let full = self.full();
        let rows = self.dichotomy()?;
        let (low, high) = (&rows[0], &rows[1]);
        let low_ok = low.classification.verdict == Verdict::GlobalExistence
            && low.trace.outcome == Outcome::CompletedBounded
            && low.trace.max_linf() <= 2.0 * KAPPA_LOW
            && low.consistent;
        let t_detect = match high.trace.outcome {
            Outcome::BlowupDetected(t) => t,
            _ => f64::NAN,
        };
        let high_ok = high.classification.verdict == Verdict::FiniteTimeBlowup && t_detect.is_finite() && high.consistent;
        let mut detail = format!(
            "0.8: {:?}/{:?} peak {:.3}; 1.2: {:?}/{:?}",
            low.classification.verdict,
            low.trace.outcome,
            low.trace.max_linf(),
            high.classification.verdict,
            high.trace.outcome
        );
        let mut passed = low_ok && high_ok;
        if full {
            let mut times = vec![t_detect];
            for cells in [2 * BASE_CELLS, 3 * BASE_CELLS] {
                let mut s = threshold_setup(&self.params, cells, 4.0, &ExtremalOptions::default(), 8.0)?;
                s.kernel = self.kernel(s.profile.grid())?;
                let sim = dichotomy_config(&s)?;
                let row = run_dichotomy(&s, &[KAPPA_HIGH], &sim, 1e-3)?.remove(0);
                times.push(match row.trace.outcome {
                    Outcome::BlowupDetected(t) => t,
                    _ => f64::NAN,
                });
            }
            let monotone = times.windows(2).all(|w| w[1] < w[0]);
            passed &= monotone && times.iter().all(|t| t.is_finite());
            detail.push_str(&format!(", t_detect under refinement {times:.3?}"));
        }
        outcome(passed, detail)
    }

    fn amplitude_peak(&mut self) -> Result<(bool, String)> {
        let s = self.setup()?;
        let e = s.exps;
        let q = |kappa: f64| -> Result<f64> {
            let u = s.profile.scaled(kappa)?;
            Ok(energy_report(&u, &e, &s.kernel)?.barrier)
        };
        let (below, at, above) = (q(0.9)?, q(1.0)?, q(1.1)?);
        outcome(below < at && above < at, format!("Q(0.9) = {below:.8}, Q(1) = {at:.8}, Q(1.1) = {above:.8}"))
    }
}

fn dichotomy_config(setup: &ThresholdSetup) -> Result<SimConfig> {
    let t_end = HORIZON * characteristic_time(&setup.profile, &setup.exps)?;
    Ok(SimConfig { t_end, record_every: 100, ..Default::default() })
}

/// `∫ e^{−|x−z|²} |z|^{−λ} dz` by shifted spherical coordinates.
fn gaussian_potential_oracle(r: f64, l: f64) -> f64 {
    if r == 0.0 {
        return 2.0 * PI * gamma((3.0 - l) / 2.0);
    }
    let f = |rho: f64| {
        if rho == 0.0 {
            return 0.0;
        }
        rho.powf(2.0 - l) * ((-(r - rho) * (r - rho)).exp() - (-(r + rho) * (r + rho)).exp()) / (4.0 * r * rho)
    };
    4.0 * PI * de(f, 0.0, r + 12.0, 1e-14).integral
}

/// `∫_{|y|<R} |x−y|^{−λ} dy` by the solid angle of the ball seen from `x`.
fn ball_potential_oracle(r: f64, radius: f64, l: f64) -> f64 {
    if r == 0.0 {
        return 4.0 * PI * radius.powf(3.0 - l) / (3.0 - l);
    }
    let f = |rho: f64| {
        let cos0 = ((radius * radius - r * r - rho * rho) / (2.0 * r * rho)).clamp(-1.0, 1.0);
        rho.powf(2.0 - l) * 2.0 * PI * (1.0 + cos0)
    };
    let kink = (radius - r).abs();
    de(f, 0.0, kink, 1e-14).integral + de(f, kink, r + radius, 1e-14).integral
}

/// `∬_{B_R×B_R} |x−y|^{−λ}` from the distance distribution of the ball.
fn ball_interaction(radius: f64, l: f64) -> f64 {
    let vol = 4.0 * PI / 3.0 * radius.powi(3);
    let t = 2.0 * radius;
    let mean = 3.0 / radius.powi(3) * t.powf(3.0 - l) / (3.0 - l) - 9.0 / (4.0 * radius.powi(4)) * t.powf(4.0 - l) / (4.0 - l)
        + 3.0 / (16.0 * radius.powi(6)) * t.powf(6.0 - l) / (6.0 - l);
    vol * vol * mean
}

/// Sparse random cells, a random sum of Gaussian shells, or a random
/// nonincreasing staircase.
fn random_density(rng: &mut ChaCha8Rng, grid: RadialGrid) -> Result<RadialField> {
    let n = grid.n();
    let values: Vec<f64> = match rng.gen_range(0..3) {
        0 => (0..n).map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.0..2.0) } else { 0.0 }).collect(),
        1 => {
            let shells: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=3))
                .map(|_| (rng.gen_range(0.1..3.0), rng.gen_range(0.0..0.7 * grid.r_max()), rng.gen_range(0.05..1.0)))
                .collect();
            (0..n)
                .map(|i| {
                    let r = grid.center(i);
                    shells.iter().map(|(a, c, w)| a * (-((r - c) / w).powi(2)).exp()).sum()
                })
                .collect()
        }
        _ => {
            let mut level = rng.gen_range(0.5..3.0);
            (0..n)
                .map(|_| {
                    if rng.gen_bool(0.05) {
                        level *= rng.gen_range(0.0..1.0);
                    }
                    level
                })
                .collect()
        }
    };
    let u = RadialField::new(grid, values)?;
    if u.is_zero() {
        return RadialField::from_fn(grid, |r| (-r * r).exp());
    }
    Ok(u)
}

/// Trial densities for the maximization: balls, Gaussians, compact bumps
/// of several exponents, and random densities.
fn trial_density(index: usize, rng: &mut ChaCha8Rng, grid: RadialGrid) -> Result<RadialField> {
    let width = rng.gen_range(0.3..0.9 * grid.r_max());
    match index % 4 {
        0 => RadialField::from_fn(grid, |r| if r < width { 1.0 } else { 0.0 }),
        1 => RadialField::from_fn(grid, |r| (-(r / (0.3 * width)).powi(2)).exp()),
        2 => {
            let q = rng.gen_range(0.5..8.0);
            RadialField::from_fn(grid, |r| (1.0 - (r / width).powi(2)).max(0.0).powf(q))
        }
        _ => random_density(rng, grid),
    }
}
