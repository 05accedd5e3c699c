//! Free energy, chemical potential, the VHLS quotient, the barrier function
//! `g` with its maximizer `x_*`, and the dissipation diagnostic.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::math::{pos_pow, powf, sqrt};
use crate::params::Exponents;
use crate::riesz::ReducedKernel;

/// All scalar functionals of one density.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyReport {
    /// `(1/(m−1)) ∫u^m`
    pub entropy_term: f64,
    /// `(c_{d,s}/2) h(u)`
    pub interaction_term: f64,
    /// `entropy_term − interaction_term`
    pub free_energy: f64,
    pub mass: f64,
    pub lm_norm: f64,
    /// `‖u‖₁^a ‖u‖_m^m`
    pub product: f64,
    /// `H(u) = ‖u‖₁^a F(u)`
    pub barrier: f64,
    /// `J(u)`; `None` for the zero field.
    pub vhls_quotient: Option<f64>,
    pub second_moment: f64,
}

/// Threshold quantities derived from an optimal constant `C*`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Thresholds {
    /// `x_* = (2/((m−1) c_{d,s} C* β))^{1/(β−1)}`
    pub x_star: f64,
    /// `g(x_*)`
    pub g_at_xstar: f64,
    pub cstar: f64,
}

/// `F(u) = (1/(m−1)) ∫u^m − (c_{d,s}/2) h(u)`.
pub fn free_energy(u: &RadialField, exps: &Exponents, kernel: &ReducedKernel) -> Result<f64> {
    let entropy = u.integral_of_power(exps.m) / (exps.m - 1.0);
    Ok(entropy - 0.5 * exps.c_ds * kernel.interaction(u)?)
}

pub fn energy_report(u: &RadialField, exps: &Exponents, kernel: &ReducedKernel) -> Result<EnergyReport> {
    let h = kernel.interaction(u)?;
    let int_m = u.integral_of_power(exps.m);
    let entropy_term = int_m / (exps.m - 1.0);
    let interaction_term = 0.5 * exps.c_ds * h;
    let free_energy = entropy_term - interaction_term;
    let mass = u.mass();
    let mass_a = pos_pow(mass, exps.a);
    let lm_norm = pos_pow(int_m, 1.0 / exps.m);
    let vhls_quotient = if mass > 0.0 { Some(h / (powf(mass, exps.a0) * powf(lm_norm, exps.b0))) } else { None };
    Ok(EnergyReport {
        entropy_term,
        interaction_term,
        free_energy,
        mass,
        lm_norm,
        product: mass_a * int_m,
        barrier: mass_a * free_energy,
        vhls_quotient,
        second_moment: u.second_moment(),
    })
}

/// `μ_i = (m/(m−1)) u_i^{m−1} − c_i`, on every cell.
pub fn chemical_potential(u: &RadialField, exps: &Exponents, kernel: &ReducedKernel) -> Result<Vec<f64>> {
    let c = kernel.potential(u, exps.c_ds)?;
    let k = exps.m / (exps.m - 1.0);
    Ok(u.values()
        .iter()
        .zip(c.values())
        .map(|(&v, &ci)| k * pos_pow(v, exps.m - 1.0) - ci)
        .collect())
}

/// `J(u) = h(u) / (‖u‖₁^{a0} ‖u‖_m^{b0})`.
pub fn vhls_quotient(u: &RadialField, exps: &Exponents, kernel: &ReducedKernel) -> Result<f64> {
    let mass = u.mass();
    if mass <= 0.0 {
        return Err(Error::ZeroField);
    }
    let h = kernel.interaction(u)?;
    Ok(h / (powf(mass, exps.a0) * powf(u.lp_norm(exps.m), exps.b0)))
}

/// `h(u) / ‖u‖_{2d/(d+2s)}²`, bounded by the sharp HLS constant.
pub fn hls_quotient(u: &RadialField, exps: &Exponents, kernel: &ReducedKernel) -> Result<f64> {
    if u.is_zero() {
        return Err(Error::ZeroField);
    }
    let d = f64::from(exps.d);
    let norm = u.lp_norm(2.0 * d / (d + 2.0 * exps.s));
    Ok(kernel.interaction(u)? / (norm * norm))
}

/// `g(x) = x/(m−1) − (c_{d,s}/2) C* x^β`.
pub fn barrier_g(x: f64, exps: &Exponents, cstar: f64) -> f64 {
    x / (exps.m - 1.0) - 0.5 * exps.c_ds * cstar * pos_pow(x, exps.beta)
}

/// The maximizer `x_*` of `g` and `g(x_*)`.
pub fn xstar_threshold(exps: &Exponents, cstar: f64) -> Result<Thresholds> {
    if !(cstar > 0.0 && cstar.is_finite()) {
        return Err(Error::Domain { function: "xstar_threshold", detail: "requires cstar > 0" });
    }
    if !(exps.beta > 1.0) {
        return Err(Error::Domain { function: "xstar_threshold", detail: "requires beta > 1" });
    }
    let x_star = powf(2.0 / ((exps.m - 1.0) * exps.c_ds * cstar * exps.beta), 1.0 / (exps.beta - 1.0));
    Ok(Thresholds { x_star, g_at_xstar: barrier_g(x_star, exps, cstar), cstar })
}

/// Discrete `∫ |(2m/(2m−1)) ∂_r u^{m−1/2} − √u ∂_r c|² dx`.
///
/// Gradients are differences across interior faces, `√u` is the face
/// average, and each face carries the volume `A_f·h`.
pub fn dissipation(u: &RadialField, exps: &Exponents, kernel: &ReducedKernel) -> Result<f64> {
    let c = kernel.potential(u, exps.c_ds)?;
    Ok(dissipation_with_potential(u, c.values(), exps))
}

pub(crate) fn dissipation_with_potential(u: &RadialField, c: &[f64], exps: &Exponents) -> f64 {
    let g = u.grid();
    let h = g.h();
    let v = u.values();
    let m = exps.m;
    let k = 2.0 * m / (2.0 * m - 1.0);
    (1..g.n())
        .map(|f| {
            let (a, b) = (v[f - 1], v[f]);
            if a == 0.0 && b == 0.0 {
                return 0.0;
            }
            let grad = (pos_pow(b, m - 0.5) - pos_pow(a, m - 0.5)) / h;
            let root = 0.5 * (sqrt(a) + sqrt(b));
            let dc = (c[f] - c[f - 1]) / h;
            let w = k * grad - root * dc;
            g.face_area(f) * h * w * w
        })
        .sum()
}

/// `∫ u |∂_r c|²` with the analytic face forces averaged onto cells.
pub fn drift_energy(u: &RadialField, exps: &Exponents, kernel: &ReducedKernel) -> Result<f64> {
    let f = kernel.force(u, exps.c_ds)?;
    let g = u.grid();
    Ok(u.values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let fc = 0.5 * (f[i] + f[i + 1]);
            v * fc * fc * g.volume(i)
        })
        .sum())
}

/// The exponent `q = 3d/(d − 2(1 − 2s))` for which `∫u|∇c|² / ‖u‖_q³` is
/// scale invariant.
pub fn drift_norm_exponent(exps: &Exponents) -> f64 {
    let d = f64::from(exps.d);
    3.0 * d / (d - 2.0 * (1.0 - 2.0 * exps.s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RadialGrid;
    use crate::params::{hls_sharp_constant, ModelParams};
    use core::f64::consts::PI;
    use quadrature::double_exponential::integrate as de;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exps() -> Exponents {
        ModelParams::new(3, 1.1, 1.2, 0.0).unwrap().exponents()
    }

    fn setup(n: usize, r: f64) -> (RadialGrid, ReducedKernel) {
        let g = RadialGrid::new(n, r).unwrap();
        let k = ReducedKernel::build(&g, 0.8, 0.0).unwrap();
        (g, k)
    }

    #[test]
    fn zero_field() {
        let e = exps();
        let (g, k) = setup(16, 1.0);
        let z = RadialField::zeros(g);
        assert_eq!(free_energy(&z, &e, &k).unwrap(), 0.0);
        assert!(chemical_potential(&z, &e, &k).unwrap().iter().all(|&x| x == 0.0));
        assert!(matches!(vhls_quotient(&z, &e, &k), Err(Error::ZeroField)));
        assert_eq!(energy_report(&z, &e, &k).unwrap().vhls_quotient, None);
        assert_eq!(dissipation(&z, &e, &k).unwrap(), 0.0);
    }

    #[test]
    fn small_amplitude_free_energy_is_positive() {
        let e = exps();
        let (g, k) = setup(128, 4.0);
        let u = RadialField::from_fn(g, |r| (-r * r).exp()).unwrap();
        let ent = u.integral_of_power(e.m) / (e.m - 1.0);
        let int = 0.5 * e.c_ds * k.interaction(&u).unwrap();
        for eps in [1e-2, 1e-3] {
            let f = free_energy(&u.scaled(eps).unwrap(), &e, &k).unwrap();
            let want = eps.powf(e.m) * ent - eps * eps * int;
            assert!(f > 0.0 && ((f - want) / want).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_free_energy_matches_quadrature_oracle() {
        let e = exps();
        let (g, k) = setup(1024, 8.0);
        let u = RadialField::from_fn(g, |r| (-r * r).exp()).unwrap();
        let l = e.lambda;
        let int_m = de(|r| 4.0 * PI * r * r * (-e.m * r * r).exp(), 0.0, 10.0, 1e-14).integral;
        let h = (PI / 2.0).powf(1.5)
            * de(|r| 4.0 * PI * r.powf(2.0 - l) * (-r * r / 2.0).exp(), 0.0, 20.0, 1e-14).integral;
        let want = int_m / (e.m - 1.0) - 0.5 * e.c_ds * h;
        let got = free_energy(&u, &e, &k).unwrap();
        assert!(((got - want) / want).abs() < 1e-4, "{got} vs {want}");
        let rep = energy_report(&u, &e, &k).unwrap();
        assert_eq!(rep.free_energy, rep.entropy_term - rep.interaction_term);
    }

    #[test]
    fn decoupled_chemical_potential() {
        let e = exps();
        let g = RadialGrid::new(32, 2.0).unwrap();
        let k = ReducedKernel::zero(&g, 0.8);
        let u = RadialField::from_fn(g, |r| 1.0 + r).unwrap();
        let mu = chemical_potential(&u, &e, &k).unwrap();
        for (m, v) in mu.iter().zip(u.values()) {
            assert!((m - 6.0 * v.powf(0.2)).abs() < 1e-14);
        }
        let flat = RadialField::from_fn(g, |_| 0.7).unwrap();
        assert!(dissipation(&flat, &e, &k).unwrap() == 0.0);
    }

    #[test]
    fn quotient_invariant_under_both_scalings() {
        let e = exps();
        let (g, k) = setup(256, 8.0);
        let u = RadialField::from_fn(g, |r| (1.0 - r / 2.5).max(0.0).powi(2) + 0.1 * (-r).exp()).unwrap();
        let j = vhls_quotient(&u, &e, &k).unwrap();
        assert!((vhls_quotient(&u.scaled(2.0).unwrap(), &e, &k).unwrap() - j).abs() <= 1e-12 * j);
        for alpha in [0.5, 1.0, 2.0] {
            for lam in [0.5, 1.0, 2.0] {
                let v = u.rescaled(alpha, lam).unwrap();
                assert!((vhls_quotient(&v, &e, &k).unwrap() - j).abs() <= 1e-8 * j);
            }
        }
        let (nu, _, _) = u.normalize_both_norms(e.m).unwrap();
        let hn = k.interaction(&nu).unwrap();
        assert!((vhls_quotient(&nu, &e, &k).unwrap() - hn).abs() <= 1e-8 * hn);
    }

    #[test]
    fn product_and_barrier_invariant_under_dynamic_scaling() {
        let e = exps();
        let (g, k) = setup(256, 6.0);
        let u = RadialField::from_fn(g, |r| 2.0 * (-r * r).exp()).unwrap();
        let base = energy_report(&u, &e, &k).unwrap();
        for lam in [0.5, 2.0] {
            let v = u.apply_dynamic_scaling(lam, &e).unwrap();
            let rep = energy_report(&v, &e, &k).unwrap();
            assert!(((rep.product - base.product) / base.product).abs() < 1e-6);
            assert!(((rep.barrier - base.barrier) / base.barrier).abs() < 1e-6);
        }
    }

    #[test]
    fn quotients_below_sharp_constant() {
        let e = exps();
        let (g, k) = setup(128, 4.0);
        let c = hls_sharp_constant(3, e.lambda).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let values: Vec<f64> = (0..128).map(|_| if rng.gen_bool(0.5) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
            let u = RadialField::new(g, values).unwrap();
            assert!(vhls_quotient(&u, &e, &k).unwrap() <= c);
            assert!(hls_quotient(&u, &e, &k).unwrap() <= c);
        }
    }

    #[test]
    fn barrier_function_shape() {
        let e = exps();
        let cstar = 1.0;
        assert_eq!(barrier_g(0.0, &e, cstar), 0.0);
        let t = xstar_threshold(&e, cstar).unwrap();
        let base = 2.0 / (0.2 * e.c_ds * 4.0 / 3.0);
        assert!(((t.x_star - base.powi(3)) / t.x_star).abs() < 1e-12);
        assert!((base - 82.30).abs() < 0.01, "{base}");
        let dx = 1e-4 * t.x_star;
        let slope = (barrier_g(t.x_star + dx, &e, cstar) - barrier_g(t.x_star - dx, &e, cstar)) / (2.0 * dx);
        assert!(slope.abs() <= 1e-8, "g'(x*) = {slope}");
        let closed = t.x_star * (e.beta - 1.0) / ((e.m - 1.0) * e.beta);
        assert!(((t.g_at_xstar - closed) / closed).abs() < 1e-10);
        let lhs = 2.0 * e.lambda * t.g_at_xstar + e.virial_coefficient() * t.x_star;
        assert!(lhs.abs() <= 1e-10 * t.x_star);
        let t2 = xstar_threshold(&e, 1.01).unwrap();
        assert!(t2.x_star < t.x_star);
        assert!((t2.x_star / t.x_star - 1.01f64.powf(-3.0)).abs() < 1e-12);
        assert!(barrier_g(0.5 * t.x_star, &e, cstar) < t.g_at_xstar);
        assert!(barrier_g(2.0 * t.x_star, &e, cstar) < t.g_at_xstar);
        assert!(xstar_threshold(&e, 0.0).is_err());
    }

    #[test]
    fn drift_energy_is_scale_invariant_relative_to_norm() {
        let e = exps();
        let (g, k) = setup(96, 6.0);
        let q = drift_norm_exponent(&e);
        assert!((q - 5.0 / 3.0).abs() < 1e-12);
        let u = RadialField::from_fn(g, |r| (1.0 - r / 2.0).max(0.0)).unwrap();
        let ratio = |w: &RadialField| drift_energy(w, &e, &k).unwrap() / w.lp_norm(q).powi(3);
        let base = ratio(&u);
        for (alpha, lam) in [(0.5, 2.0), (3.0, 1.5)] {
            let v = u.rescaled(alpha, lam).unwrap();
            assert!(((ratio(&v) - base) / base).abs() < 1e-10);
        }
    }
}
