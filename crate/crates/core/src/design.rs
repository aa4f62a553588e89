//! Choice of the velocity weight δ: the weight that maximises the first
//! critical delay, its closed-form bounds, the harm threshold, and the
//! weight that minimises the oscillation amplitude at a given delay.

use serde::{Deserialize, Serialize};

use crate::amplitude::second_order_amplitude;
use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::scalar::{golden_section, grid_min, illinois};
use crate::spectral::{delta_cr, omega_cr};

/// Fraction of N/(λθ) at which every δ search stops.
pub const DELTA_DOMAIN_CAP: f64 = 1.0 - 1e-6;
const GRID_POINTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    /// δ maximising the first critical delay.
    pub delta_max: f64,
    pub delta_1: f64,
    pub delta_2: f64,
    /// First critical delay at δ = 0.
    pub delay_cr_0: f64,
    pub delay_cr_at_max: f64,
    /// Lower bound on the maximal critical delay.
    pub delay_1: f64,
    /// Upper bound on the maximal critical delay.
    pub delay_2: f64,
    /// Largest δ that does not shorten the first critical delay below its δ = 0 value.
    pub delta_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AmplitudeOrder {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeMinimizer {
    pub delta: f64,
    pub amplitude: f64,
    /// True when the delay is below the best achievable critical delay, so a
    /// suitable δ removes the oscillation altogether.
    pub stabilizing: bool,
}

fn require_high_gain(params: &SystemParams) -> Result<()> {
    params.validate()?;
    if params.lambda_theta() <= params.n() * params.mu {
        return Err(Error::UnsupportedRegime(format!(
            "design needs lambda*theta > N*mu ({} <= {})",
            params.lambda_theta(),
            params.n() * params.mu
        )));
    }
    Ok(())
}

fn delay_cr_at(params: &SystemParams, delta: f64) -> Result<f64> {
    delta_cr(&params.with_delta(delta), 0)
}

/// dΔ_cr/dδ on the first branch.
pub fn d_delta_cr_d_delta(params: &SystemParams, delta: f64) -> Result<f64> {
    require_high_gain(params)?;
    let edge = params.ratio_edge();
    if !(delta >= 0.0 && delta < edge) {
        return Err(Error::UnsupportedRegime(format!(
            "delta must lie in [0, {edge}), got {delta}"
        )));
    }
    let l = params.lambda_theta();
    let n = params.n();
    let d = delay_cr_at(params, delta)?;
    Ok(1.0 / (1.0 + delta * params.mu) - delta * l * l * d / (n * n - delta * delta * l * l))
}

fn bound_formula(l: f64, n: f64, mu: f64, d: f64) -> f64 {
    (-d * l + (l * l * d * d + 4.0 * n * n * d * mu + 4.0 * n * n).sqrt())
        / (2.0 * l * (1.0 + d * mu))
}

/// Closed-form bracket `(δ1, δ2)` around δ_max.
pub fn delta_bounds(params: &SystemParams) -> Result<(f64, f64)> {
    require_high_gain(params)?;
    let l = params.lambda_theta();
    let n = params.n();
    let d0 = delay_cr_at(params, 0.0)?;
    let d2 = bound_formula(l, n, params.mu, d0);
    let d1 = bound_formula(l, n, params.mu, d0 + n / l);
    Ok((d1, d2))
}

/// δ maximising the first critical delay: the zero of dΔ_cr/dδ in `[δ1, δ2]`.
pub fn delta_max(params: &SystemParams) -> Result<f64> {
    let (d1, d2) = delta_bounds(params)?;
    let mut failure = None;
    let r = illinois(
        |d| match d_delta_cr_d_delta(params, d) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        d1,
        d2,
        1e-14,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    r
}

/// Bounds `(Δ1, Δ2)` on the maximal first critical delay.
pub fn delta_cr_max_bounds(params: &SystemParams) -> Result<(f64, f64)> {
    let (d1, d2) = delta_bounds(params)?;
    let (c1, c2) = (delay_cr_at(params, d1)?, delay_cr_at(params, d2)?);
    let (s1, s2) = (
        d_delta_cr_d_delta(params, d1)?,
        d_delta_cr_d_delta(params, d2)?,
    );
    if !(s1 > 0.0) {
        return Err(Error::InternalContradiction(format!(
            "slope at delta_1 = {d1} is {s1}, expected positive"
        )));
    }
    if !(s2 < 0.0) {
        return Err(Error::InternalContradiction(format!(
            "slope at delta_2 = {d2} is {s2}, expected negative"
        )));
    }
    let lower = c1.max(c2);
    let upper = (c1 + (d2 - d1) * s1).min(c2 - (d2 - d1) * s2);
    Ok((lower, upper))
}

/// Root of Δ_cr(δ) = Δ_cr(0) above δ_max.
pub fn delta_cap(params: &SystemParams) -> Result<f64> {
    let dm = delta_max(params)?;
    delta_cap_from(params, dm)
}

fn delta_cap_from(params: &SystemParams, delta_max: f64) -> Result<f64> {
    let base = delay_cr_at(params, 0.0)?;
    let hi = (1.0 - 1e-9) * params.ratio_edge();
    illinois(
        |d| delay_cr_at(params, d).map_or(f64::NAN, |v| v - base),
        delta_max + 1e-10,
        hi,
        1e-14,
    )
}

pub fn design_summary(params: &SystemParams) -> Result<DesignSummary> {
    let (delta_1, delta_2) = delta_bounds(params)?;
    let delta_max = delta_max(params)?;
    let (delay_1, delay_2) = delta_cr_max_bounds(params)?;
    Ok(DesignSummary {
        delta_max,
        delta_1,
        delta_2,
        delay_cr_0: delay_cr_at(params, 0.0)?,
        delay_cr_at_max: delay_cr_at(params, delta_max)?,
        delay_1,
        delay_2,
        delta_cap: delta_cap_from(params, delta_max)?,
    })
}

/// δ minimising the second-order amplitude estimate at `delay`.
pub fn delta_amp(params: &SystemParams, delay: f64) -> Result<AmplitudeMinimizer> {
    delta_amp_with(params, delay, AmplitudeOrder::Second)
}

/// Largest δ below which the strained frequency ω0 + ω1 stays positive.
fn self_consistent_limit(params: &SystemParams, delay: f64, hi: f64) -> f64 {
    let positive = |d: f64| {
        second_order_amplitude(&params.with_delta(d), delay)
            .map(|e| e.omega_corrected > 0.0)
            .unwrap_or(false)
    };
    let step = hi / GRID_POINTS as f64;
    let mut last_ok = 0.0;
    for i in 1..=GRID_POINTS {
        let d = i as f64 * step;
        if !positive(d) {
            let (mut a, mut b) = (last_ok, d);
            while b - a > 1e-12 {
                let c = 0.5 * (a + b);
                if positive(c) {
                    a = c;
                } else {
                    b = c;
                }
            }
            return a;
        }
        last_ok = d;
    }
    hi
}

/// Amplitude-minimising δ at `delay` for the chosen estimate.
///
/// When `delay` does not exceed the best critical delay, δ_max keeps the
/// equilibrium stable and is returned with `stabilizing` set. The
/// second-order search is restricted to δ where ω0 + ω1 > 0.
pub fn delta_amp_with(
    params: &SystemParams,
    delay: f64,
    order: AmplitudeOrder,
) -> Result<AmplitudeMinimizer> {
    require_high_gain(params)?;
    if params.n_queues != 2 {
        return Err(Error::UnsupportedRegime(format!(
            "amplitude design needs two queues, got {}",
            params.n_queues
        )));
    }
    if !(delay.is_finite() && delay > 0.0) {
        return Err(Error::Domain(format!("delay must be > 0, got {delay}")));
    }
    let dm = delta_max(params)?;
    if delay <= delay_cr_at(params, dm)? {
        return Ok(AmplitudeMinimizer {
            delta: dm,
            amplitude: 0.0,
            stabilizing: true,
        });
    }
    let full = DELTA_DOMAIN_CAP * params.ratio_edge();
    let hi = match order {
        AmplitudeOrder::First => full,
        AmplitudeOrder::Second => self_consistent_limit(params, delay, full),
    };
    let objective = |d: f64| {
        let p = params.with_delta(d);
        if omega_cr(&p).is_none() {
            return f64::INFINITY;
        }
        match second_order_amplitude(&p, delay) {
            Ok(e) => match order {
                AmplitudeOrder::First => e.first_order,
                AmplitudeOrder::Second => e.second_order,
            },
            Err(_) => f64::INFINITY,
        }
    };
    let (xg, fg) = golden_section(objective, 0.0, hi, 1e-8);
    let (xs, _) = grid_min(objective, 0.0, hi, GRID_POINTS);
    let (delta, amplitude) = if (xg - xs).abs() > 1e-3 {
        let step = hi / GRID_POINTS as f64;
        golden_section(objective, (xs - step).max(0.0), (xs + step).min(hi), 1e-8)
    } else {
        (xg, fg)
    };
    if !amplitude.is_finite() {
        return Err(Error::NumericDegeneracy(format!(
            "no finite amplitude on [0, {hi}] at delay {delay}"
        )));
    }
    Ok(AmplitudeMinimizer {
        delta,
        amplitude,
        stabilizing: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::golden_section;
    use proptest::prelude::*;

    fn fig() -> SystemParams {
        SystemParams::figure(0.0, 0.0)
    }

    fn central_difference(p: &SystemParams, d: f64) -> f64 {
        let h = 1e-6;
        (delay_cr_at(p, d + h).unwrap() - delay_cr_at(p, d - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn slope_examples() {
        let p = fig();
        assert_eq!(d_delta_cr_d_delta(&p, 0.0).unwrap(), 1.0);
        assert!(d_delta_cr_d_delta(&p, 0.19).unwrap() < 0.0);
        let s = d_delta_cr_d_delta(&p, 0.05).unwrap();
        assert!(((s - central_difference(&p, 0.05)) / s).abs() < 1e-6);
        assert!(d_delta_cr_d_delta(&p, 0.2).is_err());
        let b = SystemParams::new(1.0, 1.0, 1.0, 2, 0.0, 0.0).unwrap();
        assert!(matches!(
            d_delta_cr_d_delta(&b, 0.0),
            Err(Error::UnsupportedRegime(_))
        ));
    }

    #[test]
    fn figure_bounds() {
        let (d1, d2) = delta_bounds(&fig()).unwrap();
        assert!((d1 - 0.0609).abs() < 5e-5, "{d1}");
        assert!((d2 - 0.0840).abs() < 5e-5, "{d2}");
        let dm = delta_max(&fig()).unwrap();
        assert!(d1 < dm && dm < d2);
        let (xg, _) = golden_section(|d| -delay_cr_at(&fig(), d).unwrap(), 0.0, 0.199, 1e-10);
        assert!((xg - dm).abs() < 1e-6);
        let top = delay_cr_at(&fig(), dm).unwrap();
        assert!(delay_cr_at(&fig(), dm - 1e-4).unwrap() < top);
        assert!(delay_cr_at(&fig(), dm + 1e-4).unwrap() < top);
    }

    #[test]
    fn figure_summary_orderings() {
        let s = design_summary(&fig()).unwrap();
        assert!(0.0 < s.delta_1 && s.delta_1 < s.delta_max && s.delta_max < s.delta_2);
        assert!(s.delta_2 < s.delta_cap && s.delta_cap < 0.2);
        assert!(s.delay_1 < s.delay_cr_at_max && s.delay_cr_at_max < s.delay_2);
        assert!(s.delay_2 - s.delay_1 < s.delay_cr_at_max);
        let cap = delay_cr_at(&fig(), s.delta_cap).unwrap();
        assert!((cap - s.delay_cr_0).abs() < 1e-9);
        assert!(delay_cr_at(&fig(), 0.99 * 0.2).unwrap() < s.delay_cr_0);
        assert!(delay_cr_at(&fig(), s.delta_cap - 1e-6).unwrap() > s.delay_cr_0);
        assert!(delay_cr_at(&fig(), s.delta_cap + 1e-6).unwrap() < s.delay_cr_0);
    }

    #[test]
    fn delta_amp_examples() {
        let p = fig();
        let dm = delta_max(&p).unwrap();
        let top = delay_cr_at(&p, dm).unwrap();
        let r = delta_amp(&p, top).unwrap();
        assert!(r.stabilizing && r.delta == dm);

        let r = delta_amp(&p, 0.5).unwrap();
        assert!(!r.stabilizing);
        assert!(r.delta > 0.08 && r.delta < 0.14, "{}", r.delta);
        let first = delta_amp_with(&p, 0.5, AmplitudeOrder::First).unwrap();
        assert!(first.delta > 0.17, "{}", first.delta);
        let at = |d: f64| {
            second_order_amplitude(&p.with_delta(d), 0.5)
                .unwrap()
                .second_order
        };
        assert!(r.amplitude <= at(0.0) && r.amplitude <= at(0.15));
    }

    #[test]
    fn delta_amp_needs_two_queues() {
        let p = SystemParams::new(10.0, 1.0, 1.0, 3, 0.0, 0.0).unwrap();
        assert!(matches!(
            delta_amp(&p, 1.0),
            Err(Error::UnsupportedRegime(_))
        ));
    }

    proptest! {
        #[test]
        fn slope_is_decreasing(lambda in 3.0f64..40.0, mu in 0.1f64..1.4) {
            let p = SystemParams::new(lambda, mu, 1.0, 2, 0.0, 0.0).unwrap();
            prop_assume!(lambda > 2.0 * mu * 1.05);
            let edge = p.ratio_edge();
            let mut prev = f64::INFINITY;
            for i in 0..100 {
                let d = edge * 0.999 * i as f64 / 99.0;
                let s = d_delta_cr_d_delta(&p, d).unwrap();
                prop_assert!(s < prev);
                prev = s;
            }
        }

        #[test]
        fn ordering_chain(lambda in 3.0f64..40.0, mu in 0.1f64..1.4, n in 2usize..5) {
            let p = SystemParams::new(lambda, mu, 1.0, n, 0.0, 0.0).unwrap();
            prop_assume!(lambda > n as f64 * mu * 1.05);
            let s = design_summary(&p).unwrap();
            prop_assert!(0.0 < s.delta_1);
            prop_assert!(s.delta_1 < s.delta_max && s.delta_max < s.delta_2);
            prop_assert!(s.delta_2 < s.delta_cap && s.delta_cap < p.ratio_edge());
            prop_assert!(s.delay_1 < s.delay_cr_at_max && s.delay_cr_at_max < s.delay_2);
            let edge = p.ratio_edge();
            let top = (0..100)
                .map(|i| delay_cr_at(&p, edge * 0.999 * i as f64 / 99.0).unwrap())
                .fold(0.0, f64::max);
            prop_assert!(top <= s.delay_2);
        }
    }
}
