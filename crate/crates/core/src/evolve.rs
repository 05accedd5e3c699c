//! Explicit finite-volume time stepping of `u_t = ∇·(u∇μ) + εΔu` on the
//! shell grid, with conservation, energy and virial diagnostics and
//! blow-up detection.
//!
//! Each face `f` between cells `f−1` and `f` carries the flow
//!
//! ```text
//! Φ_f = A_f · (u_up · v_f − ε (u_f − u_{f−1})/h),   v_f = −(μ_f − μ_{f−1})/h,
//! ```
//!
//! with `u_up` taken from the cell the velocity points away from and
//! `Φ_0 = Φ_n = 0`. The cell potential is the exact gradient of the
//! discrete interaction energy, so the semi-discrete free energy decreases
//! at the rate `Σ_f A_f h u_up v_f²`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::functionals::dissipation_with_potential;
use crate::math::{pos_pow, powf, sqrt};
use crate::params::Exponents;
use crate::riesz::ReducedKernel;
use crate::special::gamma;

/// Fraction of outer cells in which mass triggers the truncation warning.
const BOUNDARY_LAYER: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimConfig {
    pub t_end: f64,
    /// Courant factor in `(0, 1]`.
    pub cfl: f64,
    /// The run stops once the stable step falls below this.
    pub dt_min: f64,
    /// Blow-up is declared when `‖u‖_∞ > blowup_factor · max(1, ‖u0‖_∞)`.
    pub blowup_factor: f64,
    /// Steps between recorded diagnostics.
    pub record_every: usize,
    /// Viscosity `ε`; must equal the regularization of the kernel.
    pub eps: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { t_end: 1.0, cfl: 0.5, dt_min: 1e-12, blowup_factor: 1e3, record_every: 100, eps: 0.0 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidConfig("t_end must be positive and finite"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidConfig("cfl must lie in (0, 1]"));
        }
        if !(self.dt_min > 0.0) {
            return Err(Error::InvalidConfig("dt_min must be positive"));
        }
        if !(self.blowup_factor > 1.0) {
            return Err(Error::InvalidConfig("blowup_factor must exceed 1"));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be positive"));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfig("eps must be nonnegative"));
        }
        Ok(())
    }
}

/// One row of diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimRecord {
    pub t: f64,
    pub mass: f64,
    pub lm_norm: f64,
    pub linf: f64,
    pub free_energy: f64,
    /// Exact second moment of the piecewise-constant density.
    pub second_moment: f64,
    pub dissipation: f64,
    /// The step that led to this record (0 for the initial row).
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Outcome {
    CompletedBounded,
    /// Time at which the trigger fired.
    BlowupDetected(f64),
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub records: Vec<SimRecord>,
    pub outcome: Outcome,
    pub steps: usize,
    /// `∫ dissipation dt`, accumulated every step.
    pub dissipated: f64,
    /// Mass reached the outer boundary layer at some point.
    pub truncation_warning: bool,
    /// Why a run ended inconclusively.
    pub note: Option<String>,
    pub final_state: RadialField,
}

impl SimTrace {
    /// Largest `|mass − mass₀|/mass₀` over the records.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.records[0].mass;
        if m0 == 0.0 {
            return 0.0;
        }
        self.records.iter().map(|r| ((r.mass - m0) / m0).abs()).fold(0.0, f64::max)
    }

    /// Largest increase of `F` between consecutive records, relative to
    /// `|F(u0)|` (nonpositive when the energy never increases).
    pub fn max_energy_increase(&self) -> f64 {
        let scale = self.records[0].free_energy.abs().max(f64::MIN_POSITIVE);
        self.records
            .windows(2)
            .map(|w| (w[1].free_energy - w[0].free_energy) / scale)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(F(u0) − F(u(t_end)), ∫ dissipation dt)`.
    pub fn energy_balance(&self) -> (f64, f64) {
        let first = self.records[0].free_energy;
        let last = self.records[self.records.len() - 1].free_energy;
        (first - last, self.dissipated)
    }

    pub fn max_linf(&self) -> f64 {
        self.records.iter().map(|r| r.linf).fold(0.0, f64::max)
    }

    /// Records violating `‖u‖_∞ ≥ moment_lower_bound(mass, m₂)`.
    pub fn moment_bound_violations(&self, d: u32) -> usize {
        self.records
            .iter()
            .filter(|r| r.mass > 0.0 && r.linf < moment_lower_bound(r.mass, r.second_moment, d))
            .count()
    }
}

/// `‖u‖₁^{(d+2)/2} / (c · m₂^{d/2})`, a lower bound for `‖u‖_∞`.
///
/// Splitting the mass at radius `ρ` gives `‖u‖₁ ≤ ‖u‖_∞ ω_d ρ^d + m₂/ρ²`;
/// the optimal `ρ` yields `c = K^{(d+2)/2}` with
/// `K = ((d+2)/2) (2/d)^{d/(d+2)} ω_d^{2/(d+2)}`.
pub fn moment_lower_bound(mass: f64, second_moment: f64, d: u32) -> f64 {
    let df = f64::from(d);
    let ball = powf(PI, 0.5 * df) / gamma(0.5 * df + 1.0);
    let k = 0.5 * (df + 2.0) * powf(2.0 / df, df / (df + 2.0)) * powf(ball, 2.0 / (df + 2.0));
    powf(mass / k, 0.5 * (df + 2.0)) / powf(second_moment, 0.5 * df)
}

/// `(m₂/‖u‖₁) / (m ‖u‖_∞^{m−1})`: squared radius of gyration over the
/// porous-medium diffusivity at the peak.
pub fn characteristic_time(u: &RadialField, exps: &Exponents) -> Result<f64> {
    let mass = u.mass();
    if mass <= 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(u.shell_second_moment() / mass / (exps.m * powf(u.linf(), exps.m - 1.0)))
}

/// Potential, face flows and the stable step at one state.
struct Snapshot {
    potential: Vec<f64>,
    flows: Vec<f64>,
    dt: f64,
}

/// The spatial operator and step-size rule for one grid.
pub struct Stepper<'a> {
    kernel: &'a ReducedKernel,
    exps: Exponents,
    cfg: SimConfig,
}

impl<'a> Stepper<'a> {
    pub fn new(kernel: &'a ReducedKernel, exps: &Exponents, cfg: &SimConfig) -> Result<Self> {
        if exps.d != 3 {
            return Err(Error::UnsupportedDimension(exps.d));
        }
        cfg.validate()?;
        if cfg.eps != kernel.eps() {
            return Err(Error::InvalidConfig("viscosity eps differs from the kernel regularization"));
        }
        Ok(Stepper { kernel, exps: *exps, cfg: *cfg })
    }

    /// One explicit Euler step with the stable `dt`; returns the new state
    /// and the step taken.
    pub fn step(&self, u: &RadialField) -> Result<(RadialField, f64)> {
        let snap = self.snapshot(u)?;
        if !snap.dt.is_finite() {
            // no flow anywhere: every step size is stable
            return Ok((u.clone(), snap.dt));
        }
        Ok((advance(u, &snap.flows, snap.dt)?, snap.dt))
    }

    /// `cfl · min(h²/(2d(m‖u‖_∞^{m−1} + ε)), h/max|v|, 1/max_i out_i)`, where
    /// `out_i` is the rate at which cell `i` loses mass through its faces.
    pub fn stable_dt(&self, u: &RadialField) -> Result<f64> {
        Ok(self.snapshot(u)?.dt)
    }

    fn snapshot(&self, u: &RadialField) -> Result<Snapshot> {
        let potential = self.kernel.potential(u, self.exps.c_ds)?.into_values();
        let (flows, velocities) = face_flows(u, &potential, &self.exps, self.cfg.eps);
        let g = u.grid();
        let h = g.h();
        let d = f64::from(self.exps.d);
        let diffusive = h * h / (2.0 * d * (self.exps.m * pos_pow(u.linf(), self.exps.m - 1.0) + self.cfg.eps));
        let v_max = velocities.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let advective = if v_max > 0.0 { h / v_max } else { f64::INFINITY };
        let out_max = (0..g.n())
            .map(|i| {
                let left = g.face_area(i) * ((-velocities[i]).max(0.0) + self.cfg.eps / h);
                let right = g.face_area(i + 1) * (velocities[i + 1].max(0.0) + self.cfg.eps / h);
                let inner = if i == 0 { 0.0 } else { left };
                let outer = if i + 1 == g.n() { 0.0 } else { right };
                (inner + outer) / g.volume(i)
            })
            .fold(0.0, f64::max);
        let positivity = if out_max > 0.0 { 1.0 / out_max } else { f64::INFINITY };
        let dt = self.cfg.cfl * diffusive.min(advective).min(positivity);
        Ok(Snapshot { potential, flows, dt })
    }
}

/// Face flows `Φ_0..=Φ_n` and velocities `v_0..=v_n` (both zero at the ends).
fn face_flows(u: &RadialField, potential: &[f64], exps: &Exponents, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let g = u.grid();
    let n = g.n();
    let h = g.h();
    let v = u.values();
    let k = exps.m / (exps.m - 1.0);
    let mu: Vec<f64> = v.iter().zip(potential).map(|(&x, &c)| k * pos_pow(x, exps.m - 1.0) - c).collect();
    let mut flows = alloc::vec![0.0; n + 1];
    let mut velocities = alloc::vec![0.0; n + 1];
    for f in 1..n {
        let vel = -(mu[f] - mu[f - 1]) / h;
        let up = if vel > 0.0 { v[f - 1] } else { v[f] };
        velocities[f] = vel;
        flows[f] = g.face_area(f) * (up * vel - eps * (v[f] - v[f - 1]) / h);
    }
    (flows, velocities)
}

fn advance(u: &RadialField, flows: &[f64], dt: f64) -> Result<RadialField> {
    let g = *u.grid();
    let mut next = Vec::with_capacity(g.n());
    for (i, &x) in u.values().iter().enumerate() {
        let y = x + dt * (flows[i] - flows[i + 1]) / g.volume(i);
        if !y.is_finite() {
            return Err(Error::NonFiniteValue { cell: i });
        }
        // the step bound keeps y ≥ 0 up to rounding
        next.push(y.max(0.0));
    }
    RadialField::new(g, next)
}

/// `(1/(m−1))∫u^m − (1/2)∫u c` with a precomputed cell potential.
fn free_energy_with_potential(u: &RadialField, potential: &[f64], exps: &Exponents) -> f64 {
    let g = u.grid();
    let interaction: f64 = u.values().iter().zip(potential).enumerate().map(|(i, (a, c))| a * c * g.volume(i)).sum();
    u.integral_of_power(exps.m) / (exps.m - 1.0) - 0.5 * interaction
}

fn touches_boundary(u: &RadialField) -> bool {
    let n = u.grid().n();
    let first = n - ((BOUNDARY_LAYER * n as f64) as usize).max(1);
    u.values()[first..].iter().any(|&x| x > 0.0)
}

/// Integrates `u0` to `cfg.t_end` or until blow-up or step collapse.
///
/// The initial row is recorded at `t = 0`, then every `record_every` steps
/// and at the final state.
pub fn run(u0: &RadialField, kernel: &ReducedKernel, exps: &Exponents, cfg: &SimConfig) -> Result<SimTrace> {
    let stepper = Stepper::new(kernel, exps, cfg)?;
    if !kernel.supports(u0.grid()) {
        return Err(Error::GridMismatch);
    }
    let peak0 = u0.linf();
    let trigger = cfg.blowup_factor * peak0.max(1.0);
    let mut u = u0.clone();
    let mut t = 0.0;
    let mut steps = 0;
    let mut dissipated = 0.0;
    let mut truncation_warning = touches_boundary(u0);
    let mut note = None;
    let mut records = Vec::new();
    let mut last_dt = 0.0;
    let mut recorded_at = None;

    let record = |u: &RadialField, potential: &[f64], t: f64, dt: f64| SimRecord {
        t,
        mass: u.mass(),
        lm_norm: u.lp_norm(exps.m),
        linf: u.linf(),
        free_energy: free_energy_with_potential(u, potential, exps),
        second_moment: u.shell_second_moment(),
        dissipation: dissipation_with_potential(u, potential, exps),
        dt,
    };

    let outcome = loop {
        let snap = stepper.snapshot(&u)?;
        if steps % cfg.record_every == 0 {
            records.push(record(&u, &snap.potential, t, last_dt));
            recorded_at = Some(steps);
        }
        if u.linf() > trigger {
            break Outcome::BlowupDetected(t);
        }
        if t >= cfg.t_end || u.is_zero() {
            break Outcome::CompletedBounded;
        }
        let dt = snap.dt.min(cfg.t_end - t);
        if snap.dt < cfg.dt_min {
            if u.linf() > 2.0 * peak0 {
                break Outcome::BlowupDetected(t);
            }
            note = Some("time step fell below dt_min".to_string());
            break Outcome::Inconclusive;
        }
        let rate = dissipation_with_potential(&u, &snap.potential, exps);
        match advance(&u, &snap.flows, dt) {
            Ok(next) => u = next,
            Err(Error::NonFiniteValue { cell }) => {
                note = Some(alloc::format!("non-finite value in cell {cell} at t = {t:e}"));
                break Outcome::Inconclusive;
            }
            Err(e) => return Err(e),
        }
        dissipated += rate * dt;
        t = if dt == cfg.t_end - t { cfg.t_end } else { t + dt };
        steps += 1;
        last_dt = dt;
        truncation_warning |= touches_boundary(&u);
    };
    if recorded_at != Some(steps) {
        let potential = kernel.potential(&u, exps.c_ds)?.into_values();
        records.push(record(&u, &potential, t, last_dt));
    }

    Ok(SimTrace { records, outcome, steps, dissipated, truncation_warning, note, final_state: u })
}

/// `(d/dt m₂` from the discrete operator, `(2d − 2(d−2s)/(m−1))∫u^m + 2(d−2s)F(u))`.
///
/// The left side is `Σ_i q_i (Φ_i − Φ_{i+1})` with `q_i` the exact mean of
/// `|x|²` over shell `i` and the flows of [`Stepper`] without viscosity.
pub fn virial_check(u: &RadialField, exps: &Exponents, kernel: &ReducedKernel) -> Result<(f64, f64)> {
    let potential = kernel.potential(u, exps.c_ds)?.into_values();
    let (flows, _) = face_flows(u, &potential, exps, 0.0);
    let g = u.grid();
    let h = g.h();
    let lhs = (0..g.n())
        .map(|i| {
            let (a, b) = (i as f64, i as f64 + 1.0);
            let q = 0.6 * h * h * (b * b * b * b * b - a * a * a * a * a) / (b * b * b - a * a * a);
            q * (flows[i] - flows[i + 1])
        })
        .sum();
    let rhs = exps.virial_coefficient() * u.integral_of_power(exps.m)
        + 2.0 * exps.lambda * free_energy_with_potential(u, &potential, exps);
    Ok((lhs, rhs))
}

/// Finiteness of the quantities the existence theory assumes for `u0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypothesisReport {
    pub mass: f64,
    pub linf: f64,
    pub second_moment: f64,
    /// Discrete `‖∂_r u0^m‖₂` over interior faces.
    pub gradient_norm: f64,
    pub mass_ok: bool,
    pub linf_ok: bool,
    pub second_moment_ok: bool,
    pub gradient_ok: bool,
    /// Mass in the outer 5% of cells.
    pub touches_boundary: bool,
}

impl HypothesisReport {
    pub fn passes(&self) -> bool {
        self.mass_ok && self.linf_ok && self.second_moment_ok && self.gradient_ok
    }
}

pub fn hypothesis_check(u0: &RadialField, exps: &Exponents) -> HypothesisReport {
    let g = u0.grid();
    let h = g.h();
    let v = u0.values();
    let gradient_sq: f64 = (1..g.n())
        .map(|f| {
            let diff = (pos_pow(v[f], exps.m) - pos_pow(v[f - 1], exps.m)) / h;
            g.face_area(f) * h * diff * diff
        })
        .sum();
    let (mass, linf, second_moment, gradient_norm) = (u0.mass(), u0.linf(), u0.shell_second_moment(), sqrt(gradient_sq));
    HypothesisReport {
        mass,
        linf,
        second_moment,
        gradient_norm,
        mass_ok: mass.is_finite(),
        linf_ok: linf.is_finite(),
        second_moment_ok: second_moment.is_finite(),
        gradient_ok: gradient_norm.is_finite(),
        touches_boundary: touches_boundary(u0),
    }
}
