//! Riesz potential `c = c_{d,s} |x|^{−λ} ∗ u` of radial densities in d = 3.
//!
//! Integrating the kernel over the angle of the source point gives the
//! reduced kernel
//!
//! ```text
//! K(r, r') = 2π / (q r r') · D(r, r'),   D = (r + r')^q − |r − r'|^q,   q = 2 − λ,
//! ```
//!
//! per unit source measure `r'² dr'` (with `(r ± r')²` replaced by
//! `r² + r'² + ε² ± 2rr'` for the regularized kernel).
//!
//! The table stored here holds the Galerkin weights
//!
//! ```text
//! S_ij = ∫_{shell i} ∫_{shell j} |x − y|^{−λ} dx dy = (8π²/q) ∬ r r' D(r, r') dr' dr,
//! ```
//!
//! so that `Σ_ij u_i S_ij u_j` is the interaction energy of the piecewise
//! constant density exactly and `Σ_j S_ij u_j / V_i` is the shell average
//! of the plain potential. The table is symmetric and nonnegative. For
//! `ε = 0` the weights are homogeneous, `S_ij(h) = h^{6−λ} S_ij(1)`, so one
//! table serves every spacing and every cell count up to its size.
//!
//! Entries near the diagonal use closed-form antiderivatives of the
//! `|r − r'|^q` part (which has a kink at `r = r'`); well separated entries
//! use tensor Gauss rules on a cancellation-free form of `D`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{RadialField, RadialGrid};
use crate::math::{ceil, exp_m1, ln, ln_1p, pos_pow, powf, sqrt};
use crate::params::ModelParams;
use crate::quadrature::RuleTable;

/// Below this cell index both coordinates are small enough for the
/// unshifted closed form.
const ORIGIN_BLOCK: usize = 8;
/// Entries with `|i − j|` up to this gap get the closed-form kink treatment.
const NEAR_GAP: usize = 4;
const MAX_RULE: usize = 24;

/// Galerkin weight table of the (optionally regularized) Riesz kernel.
#[derive(Debug, Clone)]
pub struct ReducedKernel {
    lambda: f64,
    eps: f64,
    size: usize,
    /// Spacing the table was built for; only binding when `eps > 0`.
    h_built: f64,
    /// Weights in units of the cell width, row-major `size × size`.
    table: Vec<f64>,
}

impl ReducedKernel {
    /// Builds the table for `grid` and kernel power `lambda ∈ (0, 1)`.
    pub fn build(grid: &RadialGrid, lambda: f64, eps: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Domain { function: "ReducedKernel::build", detail: "requires 0 < lambda < 1" });
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Domain { function: "ReducedKernel::build", detail: "requires finite eps >= 0" });
        }
        let n = grid.n();
        let q = 2.0 - lambda;
        let e = eps / grid.h();
        let rules = RuleTable::new(MAX_RULE);
        let mut table = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let w = if eps == 0.0 {
                    unit_entry(i, j, q, &rules)
                } else {
                    unit_entry_regularized(i, j, q, e, &rules)
                };
                table[i * n + j] = w;
                table[j * n + i] = w;
            }
        }
        Ok(ReducedKernel { lambda, eps, size: n, h_built: grid.h(), table })
    }

    /// Builds from model parameters (`λ = d − 2s`, `ε` from the parameters).
    pub fn for_params(grid: &RadialGrid, params: &ModelParams) -> Result<Self> {
        if params.d != 3 {
            return Err(Error::UnsupportedDimension(params.d));
        }
        params.validate()?;
        Self::build(grid, params.exponents().lambda, params.eps)
    }

    /// A kernel whose weights are all zero (decoupled diffusion).
    pub fn zero(grid: &RadialGrid, lambda: f64) -> Self {
        let n = grid.n();
        ReducedKernel { lambda, eps: 0.0, size: n, h_built: grid.h(), table: vec![0.0; n * n] }
    }

    /// Copy with every weight multiplied by `factor` (fault injection).
    #[doc(hidden)]
    pub fn corrupted(&self, factor: f64) -> Self {
        let mut k = self.clone();
        k.table.iter_mut().for_each(|w| *w *= factor);
        k
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Largest cell count the table covers.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Whether fields on `grid` can use this table.
    pub fn supports(&self, grid: &RadialGrid) -> bool {
        grid.n() <= self.size && (self.eps == 0.0 || (grid.h() - self.h_built).abs() <= 1e-12 * self.h_built)
    }

    fn check(&self, grid: &RadialGrid) -> Result<()> {
        if self.supports(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn scale(&self, h: f64) -> f64 {
        8.0 * PI * PI / (2.0 - self.lambda) * powf(h, 6.0 - self.lambda)
    }

    /// Physical weight `S_ij` on `grid`.
    pub fn weight(&self, grid: &RadialGrid, i: usize, j: usize) -> Result<f64> {
        self.check(grid)?;
        if i >= grid.n() || j >= grid.n() {
            return Err(Error::InvalidField("cell index outside the grid"));
        }
        Ok(self.scale(grid.h()) * self.table[i * self.size + j])
    }

    /// `Σ_j S_ij u_j` for every cell `i` (the potential times the cell volume,
    /// without `c_{d,s}`).
    fn weighted_sums(&self, u: &RadialField) -> Result<Vec<f64>> {
        let g = u.grid();
        self.check(g)?;
        let n = g.n();
        let scale = self.scale(g.h());
        let vals = u.values();
        let last = vals.iter().rposition(|&v| v != 0.0).map_or(0, |k| k + 1);
        Ok((0..n)
            .map(|i| {
                let row = &self.table[i * self.size..i * self.size + last];
                scale * row.iter().zip(&vals[..last]).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect())
    }

    /// Shell averages of `∫ u(y) |x − y|^{−λ} dy` (no `c_{d,s}` factor).
    pub fn plain_potential(&self, u: &RadialField) -> Result<Vec<f64>> {
        let g = *u.grid();
        let mut phi = self.weighted_sums(u)?;
        phi.iter_mut().enumerate().for_each(|(i, p)| *p /= g.volume(i));
        Ok(phi)
    }

    /// `c = c_{d,s} |x|^{−λ} ∗ u`, shell-averaged.
    pub fn potential(&self, u: &RadialField, c_ds: f64) -> Result<RadialField> {
        let phi = self.plain_potential(u)?;
        RadialField::new(*u.grid(), phi.into_iter().map(|p| c_ds * p.max(0.0)).collect())
    }

    /// `h(u) = ∬ u(x) u(y) |x − y|^{−λ} dx dy`.
    pub fn interaction(&self, u: &RadialField) -> Result<f64> {
        let sums = self.weighted_sums(u)?;
        Ok(u.values().iter().zip(&sums).map(|(a, b)| a * b).sum::<f64>().max(0.0))
    }

    /// Point value of the plain potential at radius `r` of the piecewise
    /// constant density.
    pub fn plain_potential_at(&self, u: &RadialField, r: f64) -> Result<f64> {
        let g = *u.grid();
        self.check(&g)?;
        let h = g.h();
        let q = 2.0 - self.lambda;
        let x = r / h;
        let e = self.eps / h;
        let rules = RuleTable::new(MAX_RULE);
        let vals = u.values();
        let mut acc = 0.0;
        if x == 0.0 {
            // limit D/r → 2q r'^{q−1}
            for (j, &v) in vals.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                let (a, b) = (j as f64, j as f64 + 1.0);
                let piece = if e == 0.0 {
                    (powf(b, q + 1.0) - powf(a, q + 1.0)) / (q + 1.0)
                } else {
                    rules.get(12).integrate(a, b, |y| y * y * powf(y * y + e * e, 0.5 * q - 1.0))
                };
                acc += v * piece;
            }
            return Ok(4.0 * PI * powf(h, q + 1.0) * acc);
        }
        for (j, &v) in vals.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            acc += v * potential_piece(x, j, q, e, &rules);
        }
        Ok(2.0 * PI / q * powf(h, q + 1.0) * acc / x)
    }

    /// `c(r)` at a point.
    pub fn potential_at(&self, u: &RadialField, r: f64, c_ds: f64) -> Result<f64> {
        Ok(c_ds * self.plain_potential_at(u, r)?)
    }

    /// `∂_r c(r)` at a point, from the analytic radial derivative of the
    /// reduced kernel. Zero at the origin.
    pub fn force_at(&self, u: &RadialField, r: f64, c_ds: f64) -> Result<f64> {
        let g = *u.grid();
        self.check(&g)?;
        if r <= 0.0 {
            return Ok(0.0);
        }
        let rules = RuleTable::new(MAX_RULE);
        Ok(self.force_at_with(u, r, c_ds, &rules))
    }

    fn force_at_with(&self, u: &RadialField, r: f64, c_ds: f64, rules: &RuleTable) -> f64 {
        let h = u.grid().h();
        let q = 2.0 - self.lambda;
        let x = r / h;
        let e = self.eps / h;
        let acc: f64 = u
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, &v)| v * force_piece(x, j, q, e, rules))
            .sum();
        c_ds * 2.0 * PI / q * powf(h, q) * acc
    }

    /// `∂_r c` at the faces `r_{k} = k h`, `k = 0..=n`.
    pub fn force(&self, u: &RadialField, c_ds: f64) -> Result<Vec<f64>> {
        let g = *u.grid();
        self.check(&g)?;
        let rules = RuleTable::new(MAX_RULE);
        Ok((0..=g.n())
            .map(|k| if k == 0 { 0.0 } else { self.force_at_with(u, g.edge(k), c_ds, &rules) })
            .collect())
    }
}

/// `build_kernel` in free-function form.
pub fn build_kernel(grid: &RadialGrid, lambda: f64, eps: f64) -> Result<ReducedKernel> {
    ReducedKernel::build(grid, lambda, eps)
}

pub fn potential(u: &RadialField, kernel: &ReducedKernel, c_ds: f64) -> Result<RadialField> {
    kernel.potential(u, c_ds)
}

pub fn force(u: &RadialField, kernel: &ReducedKernel, c_ds: f64) -> Result<Vec<f64>> {
    kernel.force(u, c_ds)
}

pub fn interaction(u: &RadialField, kernel: &ReducedKernel) -> Result<f64> {
    kernel.interaction(u)
}

// ---------------------------------------------------------------------------
// table entries, unit cell width

fn rising(q: f64, k: u32) -> f64 {
    (1..=k).map(|j| q + f64::from(j)).product()
}

/// k-th antiderivative of `|s|^q`.
fn kink_g(s: f64, q: f64, k: u32) -> f64 {
    let mag = pos_pow(s.abs(), q + f64::from(k)) / rising(q, k);
    if k % 2 == 1 && s < 0.0 {
        -mag
    } else {
        mag
    }
}

/// k-th antiderivative of `u^q`, `u ≥ 0`.
fn smooth_h(u: f64, q: f64, k: u32) -> f64 {
    pos_pow(u, q + f64::from(k)) / rising(q, k)
}

fn rect<F: Fn(f64, f64) -> f64>(f: F, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    (f(x1, y1) - f(x1, y0)) - (f(x0, y1) - f(x0, y0))
}

/// `∬ x y |x − y|^q` and its lower-order companions over a box of small
/// coordinates: returns `(∬|x−y|^q, ∬(x+y)|x−y|^q, ∬ x y |x−y|^q)`.
fn kink_moments(q: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> (f64, f64, f64) {
    let k0 = rect(|x, y| -kink_g(x - y, q, 2), x0, x1, y0, y1);
    let k1 = rect(|x, y| -(x + y) * kink_g(x - y, q, 2), x0, x1, y0, y1);
    let k2 = rect(|x, y| -x * y * kink_g(x - y, q, 2) - (q + 3.0) * kink_g(x - y, q, 4), x0, x1, y0, y1);
    (k0, k1, k2)
}

/// `D = (x+y)^q − |x−y|^q` (or the regularized form with `e > 0`) without
/// cancellation: `B^{q/2}·expm1((q/2)·ln1p(4xy/B))`, `B = (x−y)² + e²`.
#[inline]
fn stable_d(x: f64, y: f64, q: f64, e: f64) -> f64 {
    let b = (x - y) * (x - y) + e * e;
    if b == 0.0 {
        return powf(x + y, q);
    }
    powf(b, 0.5 * q) * exp_m1(0.5 * q * ln_1p(4.0 * x * y / b))
}

/// Gauss points for an integrand analytic except at distance `dist`
/// (in half-widths of the interval) from the interval center.
fn points_for(dist: f64) -> usize {
    let a = dist.max(1.05);
    let rho = a + sqrt(a * a - 1.0);
    let p = 37.0 / (2.0 * ln(rho));
    (ceil(p) as usize + 1).clamp(3, MAX_RULE)
}

fn tensor_gauss<F: Fn(f64, f64) -> f64>(rules: &RuleTable, p: usize, x0: f64, y0: f64, w: f64, f: F) -> f64 {
    let rule = rules.get(p);
    let mut acc = 0.0;
    for (x, wx) in rule.mapped(x0, x0 + w) {
        let mut inner = 0.0;
        for (y, wy) in rule.mapped(y0, y0 + w) {
            inner += wy * f(x, y);
        }
        acc += wx * inner;
    }
    acc
}

/// `∬_{[i,i+1]×[j,j+1]} x y D(x, y)`, `ε = 0`.
fn unit_entry(i: usize, j: usize, q: f64, rules: &RuleTable) -> f64 {
    let (lo, hi) = (i.min(j), i.max(j));
    let gap = hi - lo;
    let (xi, yj) = (lo as f64, hi as f64);
    if hi < ORIGIN_BLOCK {
        let smooth = rect(
            |x, y| x * y * smooth_h(x + y, q, 2) - (q + 3.0) * smooth_h(x + y, q, 4),
            xi,
            xi + 1.0,
            yj,
            yj + 1.0,
        );
        let kink = rect(
            |x, y| -x * y * kink_g(x - y, q, 2) - (q + 3.0) * kink_g(x - y, q, 4),
            xi,
            xi + 1.0,
            yj,
            yj + 1.0,
        );
        return smooth - kink;
    }
    if gap <= NEAR_GAP {
        let smooth = tensor_gauss(rules, 10, xi, yj, 1.0, |x, y| x * y * powf(x + y, q));
        let (k0, k1, k2) = kink_moments(q, 0.0, 1.0, gap as f64, gap as f64 + 1.0);
        let c = xi;
        return smooth - (c * c * k0 + c * k1 + k2);
    }
    let p = points_for(2.0 * gap as f64 - 1.0);
    tensor_gauss(rules, p, xi, yj, 1.0, |x, y| x * y * stable_d(x, y, q, 0.0))
}

/// Regularized entry in unit cell width, `e = ε/h`.
fn unit_entry_regularized(i: usize, j: usize, q: f64, e: f64, rules: &RuleTable) -> f64 {
    let (lo, hi) = (i.min(j), i.max(j));
    let gap = hi - lo;
    let (xi, yj) = (lo as f64, hi as f64);
    if gap > NEAR_GAP {
        let dist = 2.0 * gap as f64 - 1.0;
        let p = points_for(sqrt(dist * dist + 4.0 * e * e));
        return tensor_gauss(rules, p, xi, yj, 1.0, |x, y| x * y * stable_d(x, y, q, e));
    }
    // composite outer rule; the inner integral is split at y = x and graded
    // towards the (near-)kink
    let outer = rules.get(12);
    let panels = 4;
    let w = 1.0 / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        for (x, wx) in outer.mapped(xi + k as f64 * w, xi + (k + 1) as f64 * w) {
            let f = |y: f64| y * stable_d(x, y, q, e);
            let (a, b) = (yj, yj + 1.0);
            let inner = if x <= a {
                graded(rules, a, b, f)
            } else if x >= b {
                graded(rules, b, a, f)
            } else {
                graded(rules, x, a, &f) + graded(rules, x, b, &f)
            };
            acc += wx * x * inner;
        }
    }
    acc
}

/// `∫ f` over the segment between `near` and `far` (either order), with the
/// substitution `y = near + (far − near)·σ³` clustering nodes at `near`.
fn graded<F: Fn(f64) -> f64>(rules: &RuleTable, near: f64, far: f64, f: F) -> f64 {
    let len = far - near;
    let sign = len.signum();
    let len = len.abs();
    let rule = rules.get(10);
    let panels = 4;
    let w = 1.0 / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        for (s, ws) in rule.mapped(k as f64 * w, (k + 1) as f64 * w) {
            let y = near + sign * len * s * s * s;
            acc += ws * 3.0 * len * s * s * f(y);
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// point evaluations, unit cell width; `x` is the target radius

/// Distance from `x` to source cell `[j, j+1]` in cell widths.
fn cell_distance(x: f64, j: usize) -> f64 {
    let (a, b) = (j as f64, j as f64 + 1.0);
    (a - x).max(x - b).max(0.0)
}

/// `∫_j^{j+1} y D(x, y) dy`.
fn potential_piece(x: f64, j: usize, q: f64, e: f64, rules: &RuleTable) -> f64 {
    let (a, b) = (j as f64, j as f64 + 1.0);
    let dist = cell_distance(x, j);
    if e > 0.0 {
        if dist < 4.0 {
            return subdivided(rules, a, b, |y| y * stable_d(x, y, q, e));
        }
        return rules.get(points_for(2.0 * (x - a - 0.5).abs())).integrate(a, b, |y| y * stable_d(x, y, q, e));
    }
    if dist < 4.0 {
        let plus = |y: f64| {
            let t = x + y;
            powf(t, q + 2.0) / (q + 2.0) - x * powf(t, q + 1.0) / (q + 1.0)
        };
        let minus = |y: f64| {
            let t = (y - x).abs();
            let sigma = if y >= x { 1.0 } else { -1.0 };
            pos_pow(t, q + 2.0) / (q + 2.0) + sigma * x * pos_pow(t, q + 1.0) / (q + 1.0)
        };
        return (plus(b) - plus(a)) - (minus(b) - minus(a));
    }
    rules.get(points_for(2.0 * (x - a - 0.5).abs())).integrate(a, b, |y| y * stable_d(x, y, q, 0.0))
}

fn subdivided<F: Fn(f64) -> f64>(rules: &RuleTable, a: f64, b: f64, f: F) -> f64 {
    let parts = 16;
    let w = (b - a) / parts as f64;
    (0..parts).map(|k| rules.get(8).integrate(a + k as f64 * w, a + (k + 1) as f64 * w, &f)).sum()
}

/// `(1+x)^p − (1−x)^p` for `0 ≤ x < 1`.
fn f_odd(x: f64, p: f64) -> f64 {
    powf(1.0 - x, p) * exp_m1(p * ln_1p(2.0 * x / (1.0 - x)))
}

/// Generalized binomial coefficient.
fn binom(p: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (p - f64::from(j)) / f64::from(j + 1))
}

/// `q·[(1+x)^{q−1} + (1−x)^{q−1}] − [(1+x)^q − (1−x)^q]/x` for `0 < x < 1`,
/// whose constant terms cancel.
fn outer_bracket(x: f64, q: f64) -> f64 {
    if x < 0.5 {
        let x2 = x * x;
        let mut pow = x2;
        let mut acc = 0.0;
        for k in 1..=40u32 {
            let term = 2.0 * pow * (q * binom(q - 1.0, 2 * k) - binom(q, 2 * k + 1));
            acc += term;
            if term.abs() < 1e-18 * acc.abs() {
                break;
            }
            pow *= x2;
        }
        acc
    } else {
        q * (powf(1.0 + x, q - 1.0) + powf(1.0 - x, q - 1.0)) - f_odd(x, q) / x
    }
}

/// `∫_j^{j+1} y [∂_x D / x − D / x²] dy`.
fn force_piece(x: f64, j: usize, q: f64, e: f64, rules: &RuleTable) -> f64 {
    let (a, b) = (j as f64, j as f64 + 1.0);
    let dist = cell_distance(x, j);
    if e > 0.0 {
        let f = |y: f64| {
            let pp = (x + y) * (x + y) + e * e;
            let pm = (x - y) * (x - y) + e * e;
            let dx = q * ((x + y) * powf(pp, 0.5 * q - 1.0) - (x - y) * powf(pm, 0.5 * q - 1.0));
            y * (dx / x - stable_d(x, y, q, e) / (x * x))
        };
        if dist < 4.0 {
            return subdivided(rules, a, b, f);
        }
        return rules.get(points_for(2.0 * (x - a - 0.5).abs())).integrate(a, b, f);
    }
    if dist < 4.0 {
        // ∫ y D_x dy = q [P1 + M1], ∫ y D dy = P0 − M0
        let p1 = |y: f64| {
            let t = x + y;
            powf(t, q + 1.0) / (q + 1.0) - x * powf(t, q) / q
        };
        let m1 = |y: f64| {
            let t = (y - x).abs();
            let sigma = if y >= x { 1.0 } else { -1.0 };
            x * pos_pow(t, q) / q + sigma * pos_pow(t, q + 1.0) / (q + 1.0)
        };
        let p0 = |y: f64| {
            let t = x + y;
            powf(t, q + 2.0) / (q + 2.0) - x * powf(t, q + 1.0) / (q + 1.0)
        };
        let m0 = |y: f64| {
            let t = (y - x).abs();
            let sigma = if y >= x { 1.0 } else { -1.0 };
            pos_pow(t, q + 2.0) / (q + 2.0) + sigma * x * pos_pow(t, q + 1.0) / (q + 1.0)
        };
        let first = q * ((p1(b) - p1(a)) + (m1(b) - m1(a)));
        let second = (p0(b) - p0(a)) - (m0(b) - m0(a));
        return first / x - second / (x * x);
    }
    let p = points_for(2.0 * (x - a - 0.5).abs());
    if b <= x {
        rules.get(p).integrate(a, b, |y| {
            let t = y / x;
            y * powf(x, q - 2.0) * (q * f_odd(t, q - 1.0) - f_odd(t, q))
        })
    } else {
        rules.get(p).integrate(a, b, |y| y * powf(y, q - 1.0) / x * outer_bracket(x / y, q))
    }
}
