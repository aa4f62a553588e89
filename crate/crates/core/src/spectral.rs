//! Characteristic equation, Hopf points and characteristic-root search.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemParams;

/// Residual threshold for accepting a characteristic root.
pub const ROOT_TOLERANCE: f64 = 1e-9;
/// How far an arccos argument may stray outside [-1, 1] before it is an error.
pub const ACOS_CLAMP: f64 = 1e-12;
const DEDUP_DISTANCE: f64 = 1e-6;

/// A purely imaginary crossing `i·omega_cr` at delay `delta_cr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfPoint {
    pub omega_cr: f64,
    pub delta_cr: f64,
    pub root_index: u32,
    /// dα/dΔ: rate at which the real part of the crossing pair moves.
    pub crossing_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicRoot {
    pub real_part: f64,
    pub imag_part: f64,
    pub residual: f64,
}

impl CharacteristicRoot {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.real_part, self.imag_part)
    }
}

/// Φ(R) = −R − (λθ/N)(1 + δR)e^{−RΔ} − μ at the params' delay.
pub fn characteristic_residual(root: Complex64, params: &SystemParams) -> Complex64 {
    let g = params.lambda_theta() / params.n();
    -root - g * (1.0 + params.delta * root) * (-root * params.delay).exp() - params.mu
}

/// dΦ/dR.
pub fn characteristic_derivative(root: Complex64, params: &SystemParams) -> Complex64 {
    let g = params.lambda_theta() / params.n();
    let d = params.delay;
    -1.0 - g * (params.delta - d * (1.0 + params.delta * root)) * (-root * d).exp()
}

/// Critical frequency, present when the defining radicand is strictly positive.
pub fn omega_cr(params: &SystemParams) -> Option<f64> {
    let l = params.lambda_theta();
    let n = params.n();
    let num = l * l - n * n * params.mu * params.mu;
    let den = n * n - params.delta * params.delta * l * l;
    let radicand = num / den;
    (radicand.is_finite() && radicand > 0.0 && den != 0.0).then(|| radicand.sqrt())
}

/// Phase `ω·Δ_cr` of the principal crossing. The cosine condition fixes it up to
/// sign; the sine condition picks arccos when δμ < 1 and 2π − arccos otherwise.
fn crossing_phase(params: &SystemParams) -> Result<f64> {
    let l = params.lambda_theta();
    let n = params.n();
    let dm = params.delta * params.mu;
    let mut c = -(params.delta * l * l + n * n * params.mu) / (n * l * (1.0 + dm));
    if c.abs() > 1.0 {
        if c.abs() > 1.0 + ACOS_CLAMP {
            return Err(Error::NumericDomain(format!(
                "arccos argument {c} outside [-1, 1]"
            )));
        }
        c = c.clamp(-1.0, 1.0);
    }
    let a = c.acos();
    Ok(if dm < 1.0 { a } else { 2.0 * PI - a })
}

/// Critical delay on branch `k`.
pub fn delta_cr(params: &SystemParams, root_index: u32) -> Result<f64> {
    let w = omega_cr(params).ok_or_else(|| {
        Error::UnsupportedRegime(format!(
            "no imaginary-axis crossing for lambda*theta={}, N={}, mu={}, delta={}",
            params.lambda_theta(),
            params.n_queues,
            params.mu,
            params.delta
        ))
    })?;
    Ok((crossing_phase(params)? + 2.0 * PI * f64::from(root_index)) / w)
}

/// Hopf point on branch `k`, including its crossing rate.
pub fn hopf_point(params: &SystemParams, root_index: u32) -> Result<HopfPoint> {
    let d = delta_cr(params, root_index)?;
    let w = omega_cr(params).expect("delta_cr succeeded");
    let mut hp = HopfPoint {
        omega_cr: w,
        delta_cr: d,
        root_index,
        crossing_rate: 0.0,
    };
    hp.crossing_rate = crossing_rate(params, &hp)?;
    Ok(hp)
}

/// dα/dΔ at a Hopf point, from implicit differentiation of Φ.
pub fn crossing_rate(params: &SystemParams, at: &HopfPoint) -> Result<f64> {
    let l = params.lambda_theta();
    let n = params.n();
    let (dl, mu, w, d) = (params.delta, params.mu, at.omega_cr, at.delta_cr);
    let dw2 = 1.0 + dl * dl * w * w;
    let num = (n * n - dl * dl * l * l) * dw2 * w * w;
    let den = l * l * dw2 * ((dl - d).powi(2) + dl * dl * d * d * w * w)
        + n * n * (1.0 - 2.0 * dl * mu + 2.0 * d * mu + dl * dl * w * w * (2.0 * d * mu - 1.0));
    if den.abs() < 1e-14 {
        return Err(Error::NumericDegeneracy(format!(
            "crossing-rate denominator {den} vanishes"
        )));
    }
    Ok(num / den)
}

/// Damped Newton on Φ from `seed`.
pub fn find_root_near(params: &SystemParams, seed: Complex64) -> Result<CharacteristicRoot> {
    let mut r = seed;
    let mut f = characteristic_residual(r, params);
    for _ in 0..100 {
        if f.norm() < ROOT_TOLERANCE {
            break;
        }
        let df = characteristic_derivative(r, params);
        if df.norm() == 0.0 || !df.is_finite() {
            break;
        }
        let step = f / df;
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = r - s * step;
            let fc = characteristic_residual(cand, params);
            if fc.is_finite() && fc.norm() < f.norm() {
                r = cand;
                f = fc;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    // polish: a couple of full steps cost nothing and tighten the residual
    for _ in 0..3 {
        let df = characteristic_derivative(r, params);
        let cand = r - f / df;
        let fc = characteristic_residual(cand, params);
        if fc.is_finite() && fc.norm() <= f.norm() {
            r = cand;
            f = fc;
        }
    }
    if f.norm() < ROOT_TOLERANCE {
        Ok(CharacteristicRoot {
            real_part: r.re,
            imag_part: r.im,
            residual: f.norm(),
        })
    } else {
        Err(Error::NotFound(format!(
            "Newton from {seed} stalled at {r} with residual {}",
            f.norm()
        )))
    }
}

/// Upper end of the real-part seed range for [`right_half_plane_roots`].
///
/// Neutral chains drift towards Re R = ln(δλθ/N)/Δ; retarded roots stay
/// within a few multiples of λθ/N + μ.
pub fn default_scan_extent(params: &SystemParams) -> f64 {
    let g = params.lambda_theta() / params.n();
    let mut a = 2.0 * (g + params.mu);
    if params.delta > 0.0 && params.delay > 0.0 {
        let neutral = (params.delta * g).ln() / params.delay;
        a = a.max(2.0 * neutral.abs() + 1.0);
    }
    a
}

/// Seeds Newton on the grid a ∈ [0.05, a_max], b = mπ/Δ (m = 0..40) and
/// returns the distinct roots found with positive real part, sorted by
/// decreasing real part. Conjugates are reported with nonnegative imaginary part.
pub fn right_half_plane_roots(
    params: &SystemParams,
    a_max: f64,
) -> Result<Vec<CharacteristicRoot>> {
    params.validate()?;
    if params.delay <= 0.0 {
        return Err(Error::Domain("root scan needs delay > 0".into()));
    }
    let na = 16usize;
    let seeds: Vec<Complex64> = (0..na)
        .flat_map(|i| {
            let a = 0.05 + (a_max - 0.05).max(0.0) * i as f64 / (na - 1) as f64;
            (0..=40).map(move |m| Complex64::new(a, m as f64 * PI / params.delay))
        })
        .collect();
    let mut found: Vec<CharacteristicRoot> = seeds
        .par_iter()
        .filter_map(|s| find_root_near(params, *s).ok())
        .filter(|r| r.real_part > 0.0)
        .map(|r| CharacteristicRoot {
            imag_part: r.imag_part.abs(),
            ..r
        })
        .collect();
    found.sort_by(|x, y| x.residual.total_cmp(&y.residual));
    let mut merged: Vec<CharacteristicRoot> = Vec::new();
    for r in found {
        if merged
            .iter()
            .all(|m| (m.value() - r.value()).norm() > DEDUP_DISTANCE)
        {
            merged.push(r);
        }
    }
    merged.sort_by(|x, y| {
        y.real_part
            .total_cmp(&x.real_part)
            .then(x.imag_part.total_cmp(&y.imag_part))
    });
    Ok(merged)
}
