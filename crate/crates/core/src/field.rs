//! Radial densities on uniform cell-centered grids of spherical shells (d = 3).
//!
//! Cell `i` is the shell `i·h ≤ |x| < (i+1)·h` with exact volume
//! `(4π/3) h³ (3i² + 3i + 1)`. A field stores one nonnegative value per
//! cell; all norms and moments are sums against those volumes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::{cbrt, pos_pow, powf};
use crate::params::Exponents;
use crate::quadrature::GaussLegendre;

const FOUR_THIRDS_PI: f64 = 4.0 * PI / 3.0;

/// Uniform radial grid `[0, r_max]` split into `n` shells of width `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RadialGrid {
    n: usize,
    h: f64,
}

impl RadialGrid {
    pub fn new(n: usize, r_max: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("grid needs at least one cell"));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::InvalidConfig("grid radius must be positive and finite"));
        }
        Ok(RadialGrid { n, h: r_max / n as f64 })
    }

    pub fn with_spacing(n: usize, h: f64) -> Result<Self> {
        Self::new(n, h * n as f64)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn r_max(&self) -> f64 {
        self.h * self.n as f64
    }

    /// Radius of face `k` (`k = 0..=n`).
    #[inline]
    pub fn edge(&self, k: usize) -> f64 {
        self.h * k as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        self.h * (i as f64 + 0.5)
    }

    #[inline]
    pub fn volume(&self, i: usize) -> f64 {
        let k = i as f64;
        FOUR_THIRDS_PI * self.h * self.h * self.h * (3.0 * k * k + 3.0 * k + 1.0)
    }

    /// Area of the sphere through face `k`.
    #[inline]
    pub fn face_area(&self, k: usize) -> f64 {
        let r = self.edge(k);
        4.0 * PI * r * r
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.center(i))
    }

    pub fn volumes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.volume(i)).collect()
    }

    /// Same cell count, spacing multiplied by `factor`.
    pub fn stretched(&self, factor: f64) -> Self {
        RadialGrid { n: self.n, h: self.h * factor }
    }

    /// Same spacing, `n` cells.
    pub fn resized(&self, n: usize) -> Self {
        RadialGrid { n, h: self.h }
    }

    /// Index of the cell containing radius `r` (clamped to the grid).
    pub fn cell_of(&self, r: f64) -> usize {
        let k = libm::floor(r / self.h);
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.n - 1)
        }
    }
}

/// A nonnegative radial density, one value per shell.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::InvalidField("value count differs from cell count"));
        }
        if let Some(cell) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFiniteValue { cell });
        }
        Ok(RadialField { grid, values })
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        RadialField { grid, values: vec![0.0; grid.n()] }
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn<F: FnMut(f64) -> f64>(grid: RadialGrid, mut f: F) -> Result<Self> {
        let values = grid.centers().map(&mut f).collect();
        Self::new(grid, values)
    }

    /// Exact-as-quadrature shell averages `(1/V_i) ∫_{shell i} f dx`
    /// (8-point Gauss per cell), for smooth `f`.
    pub fn from_cell_averages<F: FnMut(f64) -> f64>(grid: RadialGrid, mut f: F) -> Result<Self> {
        let rule = GaussLegendre::new(8);
        let values = (0..grid.n())
            .map(|i| {
                let (a, b) = (grid.edge(i), grid.edge(i + 1));
                4.0 * PI * rule.integrate(a, b, |r| r * r * f(r)) / grid.volume(i)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// `∫ u dx`.
    pub fn mass(&self) -> f64 {
        self.values.iter().enumerate().map(|(i, u)| u * self.grid.volume(i)).sum()
    }

    /// `∫ u^q dx` for `q > 0`.
    pub fn integral_of_power(&self, q: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &u)| pos_pow(u, q) * self.grid.volume(i))
            .sum()
    }

    /// `‖u‖_q`; `q = f64::INFINITY` gives the maximum.
    pub fn lp_norm(&self, q: f64) -> f64 {
        if q == f64::INFINITY {
            return self.linf();
        }
        if q == 1.0 {
            return self.mass();
        }
        pos_pow(self.integral_of_power(q), 1.0 / q)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `∫ |x|² u dx` with the center radius of each shell.
    pub fn second_moment(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let r = self.grid.center(i);
                u * r * r * self.grid.volume(i)
            })
            .sum()
    }

    /// `∫ |x|² u dx` integrating `|x|²` exactly over every shell; this is
    /// the true second moment of the piecewise-constant density.
    pub fn shell_second_moment(&self) -> f64 {
        let h = self.grid.h();
        self.values
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let (a, b) = (i as f64, i as f64 + 1.0);
                let shell = 4.0 * PI / 5.0 * h * h * h * h * h * (b * b * b * b * b - a * a * a * a * a);
                u * shell
            })
            .sum()
    }

    /// `c·u`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// `α·u(λx)`, exactly, on the grid stretched by `1/λ` (cell values are
    /// multiplied by `α`, cell width divided by `λ`).
    pub fn rescaled(&self, alpha: f64, lambda: f64) -> Result<Self> {
        if !(alpha > 0.0 && lambda > 0.0 && alpha.is_finite() && lambda.is_finite()) {
            return Err(Error::InvalidConfig("scaling factors must be positive and finite"));
        }
        Ok(RadialField {
            grid: self.grid.stretched(1.0 / lambda),
            values: self.values.iter().map(|v| alpha * v).collect(),
        })
    }

    /// The equation's scaling `u_λ(x) = λ^{2s/(2−m)} u(λx)` (at fixed time),
    /// represented exactly on the stretched grid.
    pub fn apply_dynamic_scaling(&self, lambda: f64, exps: &Exponents) -> Result<Self> {
        self.rescaled(powf(lambda, exps.scaling_amplitude()), lambda)
    }

    /// Dynamic scaling sampled on a prescribed grid by piecewise-linear
    /// interpolation; fails when more than `1e-8` of the mass falls outside.
    pub fn dynamic_scaling_onto(&self, lambda: f64, exps: &Exponents, target: &RadialGrid) -> Result<Self> {
        self.apply_dynamic_scaling(lambda, exps)?.resample_onto(target)
    }

    /// Piecewise-linear interpolation through the cell centers (constant
    /// below the first center, linear to zero at the outer radius), clamped
    /// at zero, sampled at the centers of `target`.
    pub fn resample_onto(&self, target: &RadialGrid) -> Result<Self> {
        let total = self.mass();
        let r_out = target.r_max();
        let lost: f64 = (0..self.grid.n())
            .map(|i| {
                let (a, b) = (self.grid.edge(i), self.grid.edge(i + 1));
                if b <= r_out {
                    0.0
                } else {
                    let lo = a.max(r_out);
                    self.values[i] * FOUR_THIRDS_PI * (b * b * b - lo * lo * lo)
                }
            })
            .sum();
        if total > 0.0 && lost > 1e-8 * total {
            return Err(Error::SupportClipped { lost: lost / total });
        }
        let values = target.centers().map(|r| self.interpolate(r).max(0.0)).collect();
        Self::new(*target, values)
    }

    fn interpolate(&self, r: f64) -> f64 {
        let g = &self.grid;
        let n = g.n();
        if r <= g.center(0) {
            return self.values[0];
        }
        if r >= g.r_max() {
            return 0.0;
        }
        let last = g.center(n - 1);
        if r >= last {
            let t = (r - last) / (g.r_max() - last);
            return self.values[n - 1] * (1.0 - t);
        }
        let x = r / g.h() - 0.5;
        let i = (libm::floor(x) as usize).min(n - 2);
        let t = x - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// `ū(x) = α u(λx)` with `‖ū‖₁ = ‖ū‖_m = 1`, where
    /// `λ = ‖u‖₁^{m/(d(m−1))} ‖u‖_m^{−m/(d(m−1))}` and `α = λ^d/‖u‖₁`.
    /// Returns `(ū, λ, α)`.
    pub fn normalize_both_norms(&self, m: f64) -> Result<(Self, f64, f64)> {
        let l1 = self.mass();
        if l1 <= 0.0 {
            return Err(Error::ZeroField);
        }
        let lm = self.lp_norm(m);
        let e = m / (3.0 * (m - 1.0));
        let lambda = powf(l1, e) * powf(lm, -e);
        let alpha = lambda * lambda * lambda / l1;
        Ok((self.rescaled(alpha, lambda)?, lambda, alpha))
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }

    /// Symmetric decreasing rearrangement.
    ///
    /// Cells are sorted by value and laid out by cumulative volume from the
    /// origin; the resulting step function of the volume coordinate
    /// `v = (4π/3) r³` is averaged back onto the shells. Mass is preserved
    /// and level-set volumes are preserved up to one cell.
    pub fn rearrange_decreasing(&self) -> Self {
        if self.is_nonincreasing() {
            return self.clone();
        }
        let n = self.grid.n();
        let vol = self.grid.volumes();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| self.values[j].total_cmp(&self.values[i]).then(i.cmp(&j)));

        let mut out = vec![0.0; n];
        // target shell t spans [lo_t, lo_t + vol[t]); source piece k spans
        // [s_lo, s_lo + vol[order[k]])
        let (mut t, mut lo_t) = (0usize, 0.0f64);
        let mut acc = 0.0;
        let mut covered = 0.0;
        let mut s_lo = 0.0f64;
        for &src in &order {
            let value = self.values[src];
            let s_hi = s_lo + vol[src];
            let mut pos = s_lo;
            while t < n && pos < s_hi {
                let t_hi = lo_t + vol[t];
                let end = if t + 1 == n { s_hi.max(t_hi) } else { s_hi.min(t_hi) };
                let piece = end - pos;
                acc += value * piece;
                covered += piece;
                pos = end;
                if end >= t_hi && t + 1 < n {
                    out[t] = acc / covered.max(f64::MIN_POSITIVE);
                    acc = 0.0;
                    covered = 0.0;
                    lo_t = t_hi;
                    t += 1;
                } else if t + 1 == n && pos >= s_hi {
                    break;
                }
            }
            s_lo = s_hi;
        }
        if t < n && covered > 0.0 {
            out[t] = acc / covered;
        }
        // plateau averages can differ by an ulp; remove the resulting upticks
        for k in 1..n {
            out[k] = out[k].min(out[k - 1]);
        }
        // scale so that mass is exactly the input mass up to rounding
        let m_in = self.mass();
        let rearranged = RadialField { grid: self.grid, values: out };
        let m_out = rearranged.mass();
        if m_out > 0.0 && m_in > 0.0 {
            let c = m_in / m_out;
            RadialField { grid: self.grid, values: rearranged.values.into_iter().map(|v| v * c).collect() }
        } else {
            rearranged
        }
    }

    /// Largest cell center with `u > rel·‖u‖_∞`, or `None` for the zero field.
    pub fn support_radius(&self, rel: f64) -> Option<f64> {
        self.last_support_cell(rel).map(|i| self.grid.center(i))
    }

    pub fn last_support_cell(&self, rel: f64) -> Option<usize> {
        let cut = rel * self.linf();
        self.values.iter().rposition(|&v| v > cut && v > 0.0)
    }

    /// Extends (with zeros) or truncates to `n` cells at the same spacing.
    pub fn resized(&self, n: usize) -> Self {
        let mut values = self.values.clone();
        values.resize(n, 0.0);
        RadialField { grid: self.grid.resized(n), values }
    }

    /// The same piecewise-constant density on a grid with every cell split
    /// into `factor` equal shells.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidConfig("refinement factor must be positive"));
        }
        let grid = RadialGrid::with_spacing(self.grid.n() * factor, self.grid.h() / factor as f64)?;
        let values = self.values.iter().flat_map(|&v| core::iter::repeat_n(v, factor)).collect();
        Ok(RadialField { grid, values })
    }

    /// Volume of `{u > level}`.
    pub fn level_set_volume(&self, level: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > level)
            .map(|(i, _)| self.grid.volume(i))
            .sum()
    }
}

/// Radius of the ball with volume `v`.
pub fn ball_radius(v: f64) -> f64 {
    cbrt(v / FOUR_THIRDS_PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, r: f64) -> RadialGrid {
        RadialGrid::new(n, r).unwrap()
    }

    fn exps() -> Exponents {
        ModelParams::new(3, 1.1, 1.2, 0.0).unwrap().exponents()
    }

    fn random_field(rng: &mut ChaCha8Rng, g: RadialGrid) -> RadialField {
        let k = rng.gen_range(g.n() / 8..g.n() / 2);
        let values = (0..g.n())
            .map(|i| if i < k && rng.gen_bool(0.7) { rng.gen_range(0.0..3.0) } else { 0.0 })
            .collect();
        RadialField::new(g, values).unwrap()
    }

    #[test]
    fn volumes_tile_the_ball() {
        let g = grid(2048, 3.7);
        let s: f64 = g.volumes().iter().sum();
        let want = FOUR_THIRDS_PI * 3.7f64.powi(3);
        assert!((s - want).abs() < 1e-12 * want);
        assert!((0..g.n()).all(|i| g.edge(i) < g.edge(i + 1)));
        assert_eq!(g.edge(0), 0.0);
    }

    #[test]
    fn mass_of_simple_fields() {
        let g = grid(400, 2.0);
        assert_eq!(RadialField::zeros(g).mass(), 0.0);
        let ball = RadialField::from_fn(g, |r| if r < 1.0 { 1.0 } else { 0.0 }).unwrap();
        // R = 1 falls on a face, so the indicator is represented exactly
        assert!((ball.mass() - FOUR_THIRDS_PI).abs() < 1e-12);
    }

    #[test]
    fn mass_of_gaussian_cell_averages() {
        let g = grid(2048, 10.0);
        let u = RadialField::from_cell_averages(g, |r| (-r * r).exp()).unwrap();
        let want = PI.powf(1.5);
        assert!((u.mass() - want).abs() < 1e-6 * want);
    }

    #[test]
    fn gaussian_norm_and_moment_converge_at_second_order() {
        // piecewise-constant quadrature is O(h²): ≈4e-6 relative at n = 2048,
        // below 1e-6 at n = 8192
        let want_l2 = (PI / 2.0).powf(0.75);
        let want_m2 = 1.5 * PI.powf(1.5);
        let err = |n: usize| {
            let u = RadialField::from_fn(grid(n, 10.0), |r| (-r * r).exp()).unwrap();
            ((u.lp_norm(2.0) - want_l2).abs() / want_l2, (u.second_moment() - want_m2).abs() / want_m2)
        };
        let (l2_coarse, m2_coarse) = err(2048);
        let (l2_fine, m2_fine) = err(8192);
        assert!(l2_fine < 1e-6 && m2_fine < 1e-6, "{l2_fine} {m2_fine}");
        assert!(l2_coarse / l2_fine > 14.0 && m2_coarse / m2_fine > 14.0);
    }

    #[test]
    fn ball_norms_and_moment_closed_forms() {
        let g = grid(500, 5.0);
        let (h, r) = (2.5, 2.0);
        let u = RadialField::from_fn(g, |x| if x < r { h } else { 0.0 }).unwrap();
        let vol = FOUR_THIRDS_PI * r * r * r;
        for q in [1.0, 1.2, 2.0, 3.5] {
            let want = h * vol.powf(1.0 / q);
            assert!((u.lp_norm(q) - want).abs() < 1e-12 * want);
        }
        assert_eq!(u.lp_norm(f64::INFINITY), h);
        let exact = h * 4.0 * PI / 5.0 * r.powi(5);
        assert!((u.shell_second_moment() - exact).abs() < 1e-12 * exact);
        assert!((u.second_moment() - exact).abs() < 1e-4 * exact);
        assert_eq!(RadialField::zeros(g).second_moment(), 0.0);
    }

    #[test]
    fn homogeneity_under_value_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_field(&mut rng, grid(300, 4.0));
        let c = 3.25;
        let v = u.scaled(c).unwrap();
        assert!((v.mass() - c * u.mass()).abs() < 1e-12 * v.mass());
        assert!((v.lp_norm(1.7) - c * u.lp_norm(1.7)).abs() < 1e-12 * v.lp_norm(1.7));
        assert!((v.second_moment() - c * u.second_moment()).abs() < 1e-12 * v.second_moment());
    }

    #[test]
    fn dynamic_scaling_preserves_invariant_norm() {
        let e = exps();
        let u = RadialField::from_fn(grid(512, 6.0), |r| (-r * r).exp()).unwrap();
        let same = u.apply_dynamic_scaling(1.0, &e).unwrap();
        assert_eq!(same, u);
        for lam in [0.5, 2.0, 1.37] {
            let v = u.apply_dynamic_scaling(lam, &e).unwrap();
            let (a, b) = (u.lp_norm(e.p), v.lp_norm(e.p));
            assert!((a - b).abs() < 1e-6 * a, "λ={lam}: {a} vs {b}");
            let prod = |w: &RadialField| w.mass().powf(e.a) * w.integral_of_power(e.m);
            assert!((prod(&u) - prod(&v)).abs() < 1e-6 * prod(&u));
        }
    }

    #[test]
    fn dynamic_scaling_composes() {
        let e = exps();
        let u = RadialField::from_fn(grid(256, 5.0), |r| 1.0 / (1.0 + r * r * r)).unwrap();
        let two_steps = u.apply_dynamic_scaling(0.7, &e).unwrap().apply_dynamic_scaling(1.9, &e).unwrap();
        let one_step = u.apply_dynamic_scaling(0.7 * 1.9, &e).unwrap();
        assert!((two_steps.grid().h() - one_step.grid().h()).abs() < 1e-12);
        for (a, b) in two_steps.values().iter().zip(one_step.values()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn resampling_reports_clipped_support() {
        let e = exps();
        let g = grid(200, 4.0);
        let u = RadialField::from_fn(g, |r| if r < 3.0 { 1.0 } else { 0.0 }).unwrap();
        // λ = 0.5 doubles the support to radius 6 > 4
        assert!(matches!(u.dynamic_scaling_onto(0.5, &e, &g), Err(Error::SupportClipped { .. })));
        let v = u.dynamic_scaling_onto(2.0, &e, &g).unwrap();
        assert!(v.values().iter().all(|&x| x >= 0.0));
        let exact = u.apply_dynamic_scaling(2.0, &e).unwrap();
        assert!((v.mass() - exact.mass()).abs() < 2e-2 * exact.mass());
    }

    #[test]
    fn normalization_of_gaussian() {
        let u = RadialField::from_fn(grid(600, 8.0), |r| 2.0 * (-r * r).exp()).unwrap();
        let (v, lam, alpha) = u.normalize_both_norms(1.2).unwrap();
        assert!((v.mass() - 1.0).abs() < 1e-8);
        assert!((v.lp_norm(1.2) - 1.0).abs() < 1e-8);
        assert!(lam > 0.0 && alpha > 0.0);
        let (w, lam2, alpha2) = v.normalize_both_norms(1.2).unwrap();
        assert!((lam2 - 1.0).abs() < 1e-10 && (alpha2 - 1.0).abs() < 1e-10);
        assert!((w.mass() - 1.0).abs() < 1e-10);
        assert!(matches!(RadialField::zeros(grid(10, 1.0)).normalize_both_norms(1.2), Err(Error::ZeroField)));
    }

    #[test]
    fn rearrangement_of_monotone_field_is_identity() {
        let u = RadialField::from_fn(grid(128, 3.0), |r| (-r).exp()).unwrap();
        assert_eq!(u.rearrange_decreasing(), u);
    }

    #[test]
    fn annulus_rearranges_to_ball_of_equal_volume() {
        let g = grid(1000, 4.0);
        let (r1, r2, h) = (1.0, 2.0, 0.75);
        let u = RadialField::from_fn(g, |r| if r > r1 && r < r2 { h } else { 0.0 }).unwrap();
        let v = u.rearrange_decreasing();
        assert!(v.is_nonincreasing());
        let radius = (r2.powi(3) - r1.powi(3)).cbrt();
        let inner = g.cell_of(radius) - 1;
        assert!(v.values()[..inner].iter().all(|&x| (x - h).abs() < 1e-12));
        assert!(v.values()[inner + 2..].iter().all(|&x| x == 0.0));
        assert!((v.mass() - u.mass()).abs() < 1e-10 * u.mass());
        assert!((ball_radius(v.level_set_volume(0.5 * h)) - radius).abs() <= g.h());
    }

    #[test]
    fn rearrangement_is_equimeasurable_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let g = grid(257, 3.0);
            let u = random_field(&mut rng, g);
            let v = u.rearrange_decreasing();
            assert!(v.is_nonincreasing());
            assert!((v.mass() - u.mass()).abs() <= 1e-10 * u.mass());
            let max_cell = g.volume(g.n() - 1);
            for level in [0.1, 0.5, 1.0, 1.5, 2.5] {
                let dv = (v.level_set_volume(level) - u.level_set_volume(level)).abs();
                assert!(dv <= max_cell, "level {level}: {dv} > {max_cell}");
            }
            let w = v.rearrange_decreasing();
            assert_eq!(w, v);
        }
    }

    #[test]
    fn rejects_negative_and_nan_values() {
        let g = grid(3, 1.0);
        assert!(matches!(RadialField::new(g, vec![1.0, -1.0, 0.0]), Err(Error::NonFiniteValue { cell: 1 })));
        assert!(matches!(RadialField::new(g, vec![f64::NAN, 0.0, 0.0]), Err(Error::NonFiniteValue { cell: 0 })));
        assert!(RadialField::new(g, vec![0.0; 2]).is_err());
    }
}
