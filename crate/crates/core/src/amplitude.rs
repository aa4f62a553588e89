//! Limit-cycle amplitude estimates for two queues.
//!
//! With `w = q1 − q2` the pair reduces exactly to
//! `ẇ = −μw − λ tanh(θu/2)`, `u = w(t−Δ) + δẇ(t−Δ)`, and every queue
//! amplitude below is half the corresponding `w` amplitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::spectral::{delta_cr, omega_cr};

/// Coefficients of the radial slow flow `dR/dη = R(c2 − c1R²)/c3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowFlowCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Delay detuning Δ − Δ_cr.
    pub alpha: f64,
}

impl SlowFlowCoefficients {
    /// Nontrivial equilibrium radius `sqrt(c2/c1)`, zero when `c2 ≤ 0`.
    pub fn radius(&self) -> f64 {
        if self.c2 > 0.0 {
            (self.c2 / self.c1).sqrt()
        } else {
            0.0
        }
    }
}

/// Second-order Lindstedt coefficients of
/// `x = A cos τ + ε(a1 sin τ + a2 cos τ + a3 sin 3τ + a4 cos 3τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LindstedtCoefficients {
    pub a: f64,
    pub omega1: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeEstimate {
    /// First-order queue amplitude R1/2.
    pub first_order: f64,
    /// Queue amplitude with the next correction, (A + a2 + a4)/2.
    pub second_order: f64,
    /// Corrected frequency ω0 + ω1.
    pub omega_corrected: f64,
    pub coefficients: LindstedtCoefficients,
}

/// Which side of Δ_cr carries the stable limit cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HopfSide {
    CycleForLargerDelay,
    CycleForSmallerDelay,
}

fn require_two(params: &SystemParams) -> Result<()> {
    params.validate()?;
    if params.n_queues != 2 {
        return Err(Error::UnsupportedRegime(format!(
            "amplitude theory needs two queues, got {}",
            params.n_queues
        )));
    }
    Ok(())
}

fn require_omega(params: &SystemParams) -> Result<f64> {
    omega_cr(params)
        .ok_or_else(|| Error::UnsupportedRegime("no Hopf crossing for these parameters".into()))
}

pub fn hopf_side(params: &SystemParams) -> Result<HopfSide> {
    require_two(params)?;
    let dm = params.delta * params.mu;
    if (dm - 1.0).abs() <= 1e-12 {
        return Err(Error::DegenerateRegime(
            "delta*mu = 1: c2 vanishes for every delay".into(),
        ));
    }
    require_omega(params)?;
    Ok(if dm < 1.0 {
        HopfSide::CycleForLargerDelay
    } else {
        HopfSide::CycleForSmallerDelay
    })
}

/// Slow-flow coefficients at `delay`, measured from the first Δ_cr.
pub fn slow_flow(params: &SystemParams, delay: f64) -> Result<SlowFlowCoefficients> {
    require_two(params)?;
    let w = require_omega(params)?;
    let d0 = delta_cr(params, 0)?;
    let (mu, dl, th) = (params.mu, params.delta, params.theta);
    let l = params.lambda_theta();
    let (m2, w2) = (mu * mu, w * w);
    let alpha = delay - d0;
    let c1 = th
        * th
        * ((m2 + w2) * (m2 + w2 + dl * dl * w2 * m2 + dl * dl * w2 * w2) * d0
            + (m2 + w2) * (mu - dl * m2 + dl * dl * w2 * mu - dl * w2));
    let c2 = 4.0 * alpha * l * l * w2 * (1.0 - dl * dl * m2);
    let c3 = 4.0
        * l
        * l
        * ((m2 + w2) * (1.0 + dl * dl * w2) * d0 * d0
            + 2.0 * (mu - dl * m2 - dl * w2 + dl * dl * mu * w2) * d0
            + (1.0 - dl * mu).powi(2));
    if !(c1 > 0.0) {
        return Err(Error::InternalContradiction(format!(
            "slow-flow c1 = {c1} is not positive"
        )));
    }
    if !(c3 > 0.0) {
        return Err(Error::InternalContradiction(format!(
            "slow-flow c3 = {c3} is not positive"
        )));
    }
    Ok(SlowFlowCoefficients { c1, c2, c3, alpha })
}

fn require_lower_branch(params: &SystemParams) -> Result<()> {
    if params.delta * params.mu >= 1.0 {
        return Err(Error::UnsupportedRegime(format!(
            "amplitude estimates need delta*mu < 1, got {}",
            params.delta * params.mu
        )));
    }
    Ok(())
}

/// First-order queue amplitude `R1/2`; zero on the stable side.
pub fn first_order_amplitude(params: &SystemParams, delay: f64) -> Result<f64> {
    require_two(params)?;
    require_lower_branch(params)?;
    let sf = slow_flow(params, delay)?;
    Ok(0.5 * sf.radius())
}

/// Lindstedt coefficients with ε = 1 and Δ1 = Δ − Δ0.
pub fn lindstedt_coefficients(params: &SystemParams, delay: f64) -> Result<LindstedtCoefficients> {
    require_two(params)?;
    require_lower_branch(params)?;
    let w = require_omega(params)?;
    let big_d = delta_cr(params, 0)?;
    let d1 = delay - big_d;
    if d1 <= 0.0 {
        return Ok(LindstedtCoefficients::default());
    }
    let (lam, m, th, d) = (params.lambda, params.mu, params.theta, params.delta);
    let l2t2 = th * th * lam * lam;
    let w2 = w * w;

    let a = (4.0 * d1 * (l2t2 - 4.0 * m * m) * (4.0 - d * d * l2t2).powi(2)
        / (th
            * th
            * (1.0 - d * d * m * m)
            * (16.0 * m
                + l2t2
                    * (4.0 * big_d - 4.0 * d + d.powi(3) * l2t2
                        - 4.0 * d * d * m
                        - 4.0 * d * d * big_d * m * m))))
        .sqrt();

    let omega1 = 4.0 * d1 * l2t2 * (d * d * m * m - 1.0) * (l2t2 - 4.0 * m * m).sqrt()
        / ((4.0 - d * d * l2t2).sqrt()
            * (l2t2 * (d * (d * d * l2t2 - 4.0 * d * m * (big_d * m + 1.0) - 4.0) + 4.0 * big_d)
                + 16.0 * m));

    let den = l2t2 * l2t2 * (d * d * w2 + 1.0).powi(3) * (m * m + 9.0 * w2)
        + 16.0 * (9.0 * d * d * w2 + 1.0) * (m * m + w2).powi(3)
        + 8.0
            * l2t2
            * (-9.0 * d.powi(4) * w.powi(8) - 6.0 * m * m * w2 * (d * d * m * m + 1.0)
                + 2.0 * d * d * w.powi(6) * (d * m * (9.0 * d * m - 32.0) + 9.0)
                + 3.0 * w.powi(4) * (d.powi(4) * m.powi(4) - 12.0 * d * d * m * m + 1.0)
                - m.powi(4));

    let a1 = -(2.0
        * a.powi(3)
        * th
        * th
        * w.powi(3)
        * (l2t2 * m * (d * d * w2 + 1.0).powi(3) - 4.0 * d.powi(3) * (m * m + w2).powi(3)))
        / den;
    let a3 = -a1 / 3.0;
    let a4 = -(1.0 / 12.0)
        * (a.powi(3)
            * th
            * th
            * (l2t2
                * (d * d * w2 + 1.0).powi(3)
                * (m.powi(4) + 6.0 * m * m * w2 - 3.0 * w.powi(4))
                + 4.0
                    * (3.0 * d.powi(4) * w.powi(4) - 6.0 * d * d * w2 - 1.0)
                    * (m * m + w2).powi(3)))
        / den;

    let (bd, w1) = (big_d, omega1);
    let num = a.powi(5)
        * th.powi(4)
        * (d * d * w2 + 1.0).powi(2)
        * (d * d * m * w2
            + m * m * (d * (d * bd * w2 - 1.0) + bd)
            + w2 * (d * (d * bd * w2 - 1.0) + bd)
            + m)
        - 12.0
            * a.powi(3)
            * th
            * th
            * w
            * (w1
                * (d * (3.0 * d.powi(3) * bd * w.powi(4)
                    + d * w2 * (d * (d * m * (2.0 * bd * m + 3.0) - 3.0) + 4.0 * bd)
                    + d * m * (-2.0 * d * m + 2.0 * bd * m + 3.0)
                    - 1.0)
                    + bd)
                - d1 * w * (d * d * m * m - 1.0) * (d * d * w2 + 1.0))
        + 12.0
            * a
            * a
            * th
            * th
            * (a1 * w * (d * d * m * m - 1.0) * (d * d * w2 + 1.0)
                + a3 * w
                    * (d * d
                        * (w2 * (d * m * (-3.0 * d * m + 8.0 * bd * m + 8.0) - 5.0)
                            + 8.0 * d * bd * w.powi(4)
                            + m * m)
                        - 1.0)
                + a4 * (3.0 * d.powi(4) * bd * w.powi(6)
                    + 3.0 * d * d * w.powi(4) * (d * (d * m * (bd * m + 1.0) - 1.0) - 2.0 * bd)
                    + w2 * (d * (d * m * (5.0 * d * m - 6.0 * bd * m - 6.0) + 1.0) - bd)
                    + m * (d * m - bd * m - 1.0)))
        - 96.0
            * a
            * (2.0
                * d1
                * w
                * w1
                * (m * (m * (2.0 * d * d - 2.0 * d * bd + bd * bd) - d + bd)
                    + d * d * bd * bd * w.powi(4)
                    + bd * w2 * (d * (d * m * (bd * m + 1.0) - 2.0) + bd)
                    - 1.0)
                + bd * w1
                    * w1
                    * (d * d * bd * bd * w.powi(4)
                        + bd * w2 * (d * (d * m * (bd * m + 1.0) - 3.0) + bd)
                        + m * (2.0 * d - bd) * (d * m - bd * m - 1.0))
                + d1 * d1
                    * w2
                    * (d * d * bd * w.powi(4)
                        + w2 * (d * (d * m * (bd * m + 1.0) - 1.0) + bd)
                        + m * (-d * m + bd * m + 1.0)))
        - 192.0
            * a1
            * (w1
                * (d * d * bd * bd * w.powi(4)
                    + bd * w2 * (d * (d * m * (bd * m + 2.0) - 2.0) + bd)
                    + (-d * m + bd * m + 1.0).powi(2))
                + d1 * w
                    * (d * d * bd * w.powi(4)
                        + w2 * (d * (d * m * (bd * m + 1.0) - 1.0) + bd)
                        + m * (-d * m + bd * m + 1.0)));
    let dd = 3.0
        * a
        * a
        * th
        * th
        * (d * d * w2 + 1.0)
        * (d * d * bd * w.powi(4)
            + w2 * (d * (d * m * (bd * m + 1.0) - 1.0) + bd)
            + m * (-d * m + bd * m + 1.0))
        + 16.0 * d1 * w2 * (d * d * m * m - 1.0);
    let a2 = num / dd / 12.0;

    let c = LindstedtCoefficients {
        a,
        omega1,
        a1,
        a2,
        a3,
        a4,
    };
    for (name, v) in [
        ("A", c.a),
        ("omega1", c.omega1),
        ("a1", c.a1),
        ("a2", c.a2),
        ("a3", c.a3),
        ("a4", c.a4),
    ] {
        if !v.is_finite() {
            return Err(Error::NumericDegeneracy(format!(
                "coefficient {name} is {v}"
            )));
        }
    }
    Ok(c)
}

/// First- and second-order amplitude estimates at `delay`.
pub fn second_order_amplitude(params: &SystemParams, delay: f64) -> Result<AmplitudeEstimate> {
    let first_order = first_order_amplitude(params, delay)?;
    let c = lindstedt_coefficients(params, delay)?;
    let w0 = require_omega(params)?;
    Ok(AmplitudeEstimate {
        first_order,
        second_order: 0.5 * (c.a + c.a2 + c.a4),
        omega_corrected: w0 + c.omega1,
        coefficients: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig(delta: f64) -> SystemParams {
        SystemParams::figure(delta, 0.0)
    }

    #[test]
    fn zero_at_the_bifurcation() {
        let p = fig(0.1);
        let d0 = delta_cr(&p, 0).unwrap();
        let sf = slow_flow(&p, d0).unwrap();
        assert_eq!(sf.c2, 0.0);
        assert_eq!(sf.radius(), 0.0);
        let est = second_order_amplitude(&p, d0).unwrap();
        assert_eq!(est.first_order, 0.0);
        assert_eq!(est.second_order, 0.0);
        assert_eq!(first_order_amplitude(&p, d0 - 0.05).unwrap(), 0.0);
    }

    #[test]
    fn figure_first_order_value() {
        let p = fig(0.0);
        let d0 = delta_cr(&p, 0).unwrap();
        assert!(slow_flow(&p, d0 + 0.1).unwrap().c2 > 0.0);
        let r = first_order_amplitude(&p, d0 + 0.2).unwrap();
        assert!((r - 1.383).abs() < 1e-3, "{r}");
        // same number straight from the slow-flow closed form at δ = 0
        let w2 = 24.0;
        let c1 = (1.0 + w2) * (1.0 + w2) * d0 + (1.0 + w2);
        let c2 = 4.0 * 0.2 * 100.0 * w2;
        assert!((r - 0.5 * (c2 / c1).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn first_order_scales_as_sqrt() {
        let p = fig(0.07);
        let d0 = delta_cr(&p, 0).unwrap();
        let a = first_order_amplitude(&p, d0 + 0.01).unwrap();
        let b = first_order_amplitude(&p, d0 + 0.04).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn first_order_matches_leading_lindstedt_term() {
        for delta in [0.0, 0.1, 0.19] {
            let p = fig(delta);
            let d = delta_cr(&p, 0).unwrap() + 0.1;
            let est = second_order_amplitude(&p, d).unwrap();
            assert!((est.first_order - 0.5 * est.coefficients.a).abs() < 1e-10 * est.first_order);
        }
    }

    #[test]
    fn reference_coefficients_at_delta_zero() {
        let p = fig(0.0);
        let d = delta_cr(&p, 0).unwrap() + 0.2;
        let c = lindstedt_coefficients(&p, d).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() < 1e-11 * y.abs();
        assert!(close(c.a, 2.765275169717));
        assert!(close(c.omega1, -2.43888382352913));
        assert!(close(c.a1, -0.13488369758061));
        assert!(close(c.a2, 0.04943435003717));
        assert!(close(c.a3, 0.04496123252687));
        assert!(close(c.a4, 0.10554324131839));
    }

    #[test]
    fn hopf_side_examples() {
        assert_eq!(hopf_side(&fig(0.0)).unwrap(), HopfSide::CycleForLargerDelay);
        // for two queues δμ > 1 and a crossing only coexist with λθ < 2μ < δλθμ
        let p = SystemParams::new(1.0, 1.0, 1.0, 2, 3.0, 0.0).unwrap();
        assert_eq!(hopf_side(&p).unwrap(), HopfSide::CycleForSmallerDelay);
        let q = SystemParams::new(10.0, 2.0, 1.0, 2, 0.5, 0.0).unwrap();
        assert!(matches!(hopf_side(&q), Err(Error::DegenerateRegime(_))));
    }

    #[test]
    fn upper_branch_sign_of_c2() {
        let p = SystemParams::new(1.0, 1.0, 1.0, 2, 3.0, 0.0).unwrap();
        let d0 = delta_cr(&p, 0).unwrap();
        assert!(slow_flow(&p, d0 + 0.01).unwrap().c2 < 0.0);
        assert!(matches!(
            first_order_amplitude(&p, d0 + 0.01),
            Err(Error::UnsupportedRegime(_))
        ));
    }

    #[test]
    fn three_queues_unsupported() {
        let p = SystemParams::new(10.0, 1.0, 1.0, 3, 0.0, 0.0).unwrap();
        assert!(matches!(
            slow_flow(&p, 1.0),
            Err(Error::UnsupportedRegime(_))
        ));
    }

    proptest! {
        #[test]
        fn slow_flow_signs(
            lambda in 2.5f64..40.0,
            mu in 0.1f64..1.2,
            theta in 0.3f64..3.0,
            frac in 0.0f64..0.98,
            alpha in 0.001f64..0.5,
        ) {
            let base = SystemParams::new(lambda, mu, theta, 2, 0.0, 0.0).unwrap();
            prop_assume!(base.lambda_theta() > 2.0 * mu * 1.01);
            let p = base.with_delta(frac * base.ratio_edge());
            let d0 = delta_cr(&p, 0).unwrap();
            let sf = slow_flow(&p, d0 + alpha).unwrap();
            prop_assert!(sf.c1 > 0.0 && sf.c3 > 0.0);
            let dm = p.delta * mu;
            prop_assume!((dm - 1.0).abs() > 1e-9);
            prop_assert_eq!(sf.c2 > 0.0, dm < 1.0);
            // c3 is a quadratic in Δ_cr whose minimum stays positive
            let (w, dl, l) = (omega_cr(&p).unwrap(), p.delta, p.lambda_theta());
            let (m2, w2) = (mu * mu, w * w);
            let cmin = 4.0 * l * l * w2 * (1.0 - dl * dl * m2).powi(2) / ((m2 + w2) * (1.0 + dl * dl * w2));
            prop_assert!(cmin > 0.0 && sf.c3 >= cmin * (1.0 - 1e-12));
        }

        #[test]
        fn initial_condition_constraint(
            frac in 0.0f64..0.98,
            alpha in 0.001f64..0.5,
            mu in 0.2f64..1.5,
        ) {
            let base = SystemParams::new(10.0, mu, 1.0, 2, 0.0, 0.0).unwrap();
            let p = base.with_delta(frac * base.ratio_edge());
            prop_assume!(p.delta * mu < 1.0);
            let d0 = delta_cr(&p, 0).unwrap();
            let c = lindstedt_coefficients(&p, d0 + alpha).unwrap();
            prop_assert!((c.a1 + 3.0 * c.a3).abs() <= 1e-15 * c.a1.abs().max(1e-300));
        }
    }
}
