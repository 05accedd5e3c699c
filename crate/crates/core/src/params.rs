//! Model parameters, the supercritical regime and every derived exponent.

use core::f64::consts::PI;

use crate::error::{Error, Inequality, Result};
use crate::math::powf;
use crate::special::gamma;

/// Physical parameters `(d, s, m, ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    /// Spatial dimension.
    pub d: u32,
    /// Order of the Riesz potential `(−Δ)^{−s}`.
    pub s: f64,
    /// Porous-medium exponent.
    pub m: f64,
    /// Regularization strength of the smoothed problem; 0 for the limit problem.
    pub eps: f64,
}

impl ModelParams {
    /// Builds and validates.
    pub fn new(d: u32, s: f64, m: f64, eps: f64) -> Result<Self> {
        let p = ModelParams { d, s, m, eps };
        p.validate()?;
        Ok(p)
    }

    /// Checks `d ≥ 3`, `2 < 2s < d`, `2d/(d+2s) < m < 2 − 2s/d` and `ε ≥ 0`,
    /// reporting the first inequality that fails.
    pub fn validate(&self) -> Result<()> {
        let d = f64::from(self.d);
        let (s, m) = (self.s, self.m);
        let check = |ok: bool, which| if ok { Ok(()) } else { Err(Error::Regime(which)) };
        check(self.d >= 3, Inequality::DimensionAtLeastThree)?;
        check(2.0 < 2.0 * s, Inequality::LowerOrder)?;
        check(2.0 * s < d, Inequality::UpperOrder)?;
        check(2.0 * d / (d + 2.0 * s) < m, Inequality::LowerDiffusion)?;
        check(m < 2.0 - 2.0 * s / d, Inequality::UpperDiffusion)?;
        check(self.eps >= 0.0, Inequality::NonNegativeEps)?;
        Ok(())
    }

    /// Derived exponents. Call [`validate`](Self::validate) first; the
    /// formulas are evaluated regardless.
    pub fn exponents(&self) -> Exponents {
        let d = f64::from(self.d);
        let (s, m) = (self.s, self.m);
        let lambda = d - 2.0 * s;
        // shared numerator and denominators, with 2d − 2s − dm written as
        // λ − d(m−1), keep b0 = mβ and a + a0 = aβ exact up to rounding
        let num = (d + 2.0 * s) * m - 2.0 * d;
        let dm1 = d * (m - 1.0);
        let beta = lambda / dm1;
        Exponents {
            d: self.d,
            s,
            m,
            p: d * (2.0 - m) / (2.0 * s),
            a: num / (lambda - dm1),
            a0: num / dm1,
            b0: m * beta,
            beta,
            lambda,
            c_ds: riesz_constant(self.d, s).unwrap_or(f64::NAN),
        }
    }
}

/// Exponents and constants derived from `(d, s, m)`.
///
/// * `p = d(2−m)/(2s)`: the Lebesgue exponent preserved by the dynamic scaling.
/// * `a = ((d+2s)m − 2d)/(2d − 2s − dm)`: threshold exponent on the mass.
/// * `a0`, `b0`: mass and `L^m` exponents of the HLS-type inequality
///   `h(u) ≤ C* ‖u‖₁^{a0} ‖u‖_m^{b0}`.
/// * `beta = (d−2s)/(d(m−1))`, with `b0 = m·beta` and `a + a0 = a·beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Exponents {
    pub d: u32,
    pub s: f64,
    pub m: f64,
    pub p: f64,
    pub a: f64,
    pub a0: f64,
    pub b0: f64,
    pub beta: f64,
    /// Kernel power `d − 2s`.
    pub lambda: f64,
    /// Riesz normalization `c_{d,s}`.
    pub c_ds: f64,
}

impl Exponents {
    /// Amplitude exponent `2s/(2−m)` of the dynamic scaling `λ^{2s/(2−m)} u(λx)`.
    pub fn scaling_amplitude(&self) -> f64 {
        2.0 * self.s / (2.0 - self.m)
    }

    /// Coefficient `2d − 2(d−2s)/(m−1)` of `∫u^m` in the second-moment identity.
    pub fn virial_coefficient(&self) -> f64 {
        2.0 * f64::from(self.d) - 2.0 * self.lambda / (self.m - 1.0)
    }
}

/// `c_{d,s} = Γ(d/2 − s) / (π^{d/2} 4^s Γ(s))`.
pub fn riesz_constant(d: u32, s: f64) -> Result<f64> {
    let half_d = 0.5 * f64::from(d);
    if !(s > 0.0 && half_d - s > 0.0) {
        return Err(Error::Domain {
            function: "riesz_constant",
            detail: "requires 0 < s < d/2",
        });
    }
    Ok(gamma(half_d - s) / (powf(PI, half_d) * powf(4.0, s) * gamma(s)))
}

/// Sharp constant of the diagonal Hardy–Littlewood–Sobolev inequality
/// `∬ f(x) f(y) |x−y|^{−λ} ≤ C(d,λ) ‖f‖_{2d/(2d−λ)}²`:
///
/// `C(d,λ) = π^{λ/2} Γ(d/2 − λ/2)/Γ(d − λ/2) · (Γ(d/2)/Γ(d))^{−1+λ/d}`.
pub fn hls_sharp_constant(d: u32, lambda: f64) -> Result<f64> {
    let df = f64::from(d);
    if !(lambda > 0.0 && lambda < df) {
        return Err(Error::Domain {
            function: "hls_sharp_constant",
            detail: "requires 0 < lambda < d",
        });
    }
    let ratio = gamma(0.5 * df) / gamma(df);
    Ok(powf(PI, 0.5 * lambda) * gamma(0.5 * (df - lambda)) / gamma(df - 0.5 * lambda)
        * powf(ratio, -1.0 + lambda / df))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::function::gamma::gamma as ref_gamma;

    fn base() -> ModelParams {
        ModelParams::new(3, 1.1, 1.2, 0.0).unwrap()
    }

    #[test]
    fn validate_examples() {
        assert!(ModelParams::new(3, 1.1, 1.2, 0.0).is_ok());
        assert!(matches!(
            ModelParams::new(3, 1.0, 1.2, 0.0),
            Err(Error::Regime(Inequality::LowerOrder))
        ));
        assert!(matches!(
            ModelParams::new(3, 1.1, 1.3, 0.0),
            Err(Error::Regime(Inequality::UpperDiffusion))
        ));
        assert!(matches!(
            ModelParams::new(3, 1.1, 1.15, 0.0),
            Err(Error::Regime(Inequality::LowerDiffusion))
        ));
        assert!(matches!(
            ModelParams::new(2, 1.1, 1.2, 0.0),
            Err(Error::Regime(Inequality::DimensionAtLeastThree))
        ));
        assert!(matches!(
            ModelParams::new(3, 1.1, 1.2, -1.0),
            Err(Error::Regime(Inequality::NonNegativeEps))
        ));
    }

    #[test]
    fn regime_message_names_the_inequality() {
        let err = ModelParams::new(3, 1.0, 1.2, 0.0).unwrap_err();
        assert_eq!(alloc::format!("{err}"), "regime violated: 2<2s fails");
    }

    #[test]
    fn exponents_for_reference_parameters() {
        let e = base().exponents();
        assert!((e.a - 1.2).abs() < 1e-12);
        assert!((e.a0 - 0.4).abs() < 1e-12);
        assert!((e.b0 - 1.6).abs() < 1e-12);
        assert!((e.beta - 4.0 / 3.0).abs() < 1e-12);
        assert!((e.p - 12.0 / 11.0).abs() < 1e-12);
        assert!((e.lambda - 0.8).abs() < 1e-12);
    }

    #[test]
    fn threshold_exponent_vanishes_at_lower_diffusion_edge() {
        let edge = 8.0 / 7.0;
        let e = ModelParams { d: 4, s: 1.5, m: edge + 1e-9, eps: 0.0 }.exponents();
        assert!(e.a > 0.0 && e.a < 1e-7, "a = {}", e.a);
    }

    #[test]
    fn riesz_constant_against_reference_gamma() {
        let want = ref_gamma(0.4) / (PI.powf(1.5) * 4f64.powf(1.1) * ref_gamma(1.1));
        let got = riesz_constant(3, 1.1).unwrap();
        assert!(((got - want) / want).abs() < 1e-12);
        assert!((got - 0.091_13).abs() < 1e-5);

        let limit = ref_gamma(0.5) / (PI.powf(1.5) * 4.0 * ref_gamma(1.0));
        let near = riesz_constant(3, 1.0 + 1e-9).unwrap();
        assert!(((near - limit) / limit).abs() < 1e-7);

        assert!(riesz_constant(3, 1.5).is_err());
        assert!(riesz_constant(3, 0.0).is_err());
    }

    #[test]
    fn hls_constant_against_reference_gamma() {
        let oracle = |d: f64, l: f64| {
            PI.powf(l / 2.0) * ref_gamma(d / 2.0 - l / 2.0) / ref_gamma(d - l / 2.0)
                * (ref_gamma(d / 2.0) / ref_gamma(d)).powf(-1.0 + l / d)
        };
        let c = hls_sharp_constant(3, 0.8).unwrap();
        assert!(((c - oracle(3.0, 0.8)) / c).abs() < 1e-12);
        assert!((c - 1.910_737).abs() < 1e-6, "C(3, 0.8) = {c}");
        let c4 = hls_sharp_constant(4, 1.0).unwrap();
        assert!(((c4 - oracle(4.0, 1.0)) / c4).abs() < 1e-12);
        let tiny = hls_sharp_constant(3, 1e-10).unwrap();
        assert!((tiny - 1.0).abs() < 1e-8);
        assert!(hls_sharp_constant(3, 3.0).is_err());
    }

    fn valid_triple() -> impl Strategy<Value = ModelParams> {
        (3u32..=8, 0.0f64..1.0, 0.0f64..1.0)
            .prop_map(|(d, ts, tm)| {
                let df = f64::from(d);
                let s = 1.0 + 1e-3 + ts * (0.5 * df - 1.0 - 2e-3);
                let lo = 2.0 * df / (df + 2.0 * s);
                let hi = 2.0 - 2.0 * s / df;
                let m = lo + (hi - lo) * (1e-3 + 0.998 * tm);
                ModelParams { d, s, m, eps: 0.0 }
            })
            .prop_filter("valid regime", |p| p.validate().is_ok())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn exponent_identities(p in valid_triple()) {
            let e = p.exponents();
            // relative to the largest term: near the regime edges a0, b0 and
            // beta grow without bound
            prop_assert!((e.b0 - e.m * e.beta).abs() <= 1e-14 * e.b0.abs().max(1.0));
            let scale = e.a.abs().max(e.a0.abs()).max((e.a * e.beta).abs()).max(1.0);
            prop_assert!((e.a + e.a0 - e.a * e.beta).abs() <= 1e-14 * scale);
            let d = f64::from(e.d);
            prop_assert!(e.p > 1.0 && e.p < 2.0 * d / (d + 2.0 * e.s) && 2.0 * d / (d + 2.0 * e.s) < e.m);
            prop_assert!(e.beta > 1.0);
            prop_assert!(e.a > 0.0);
        }
    }
}
