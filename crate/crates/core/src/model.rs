//! Model constants, choice probabilities and the neutral DDE right-hand side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding that a parameter sits on a region boundary.
pub const REGION_TOLERANCE: f64 = 1e-12;

/// Model constants.
///
/// `delay` is the announcement lag Δ and `delta` the weight δ given to the
/// delayed queue velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Arrival rate λ.
    pub lambda: f64,
    /// Per-customer service rate μ.
    pub mu: f64,
    /// Logit sensitivity θ.
    pub theta: f64,
    /// Number of queues N.
    pub n_queues: usize,
    /// Velocity weight δ.
    #[serde(default)]
    pub delta: f64,
    /// Announcement lag Δ.
    #[serde(default)]
    pub delay: f64,
}

impl SystemParams {
    pub fn new(
        lambda: f64,
        mu: f64,
        theta: f64,
        n_queues: usize,
        delta: f64,
        delay: f64,
    ) -> Result<Self> {
        let p = Self {
            lambda,
            mu,
            theta,
            n_queues,
            delta,
            delay,
        };
        p.validate()?;
        Ok(p)
    }

    /// The parameter set used for most of the figures: two queues, λ = 10, μ = 1, θ = 1.
    pub fn figure(delta: f64, delay: f64) -> Self {
        Self {
            lambda: 10.0,
            mu: 1.0,
            theta: 1.0,
            n_queues: 2,
            delta,
            delay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        positive("lambda", self.lambda)?;
        positive("mu", self.mu)?;
        positive("theta", self.theta)?;
        if self.n_queues < 2 {
            return Err(Error::Domain(format!(
                "n_queues must be >= 2, got {}",
                self.n_queues
            )));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::Domain(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        if !(self.delay.is_finite() && self.delay >= 0.0) {
            return Err(Error::Domain(format!(
                "delay must be finite and >= 0, got {}",
                self.delay
            )));
        }
        Ok(())
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_delay(mut self, delay: f64) -> Self {
        self.delay = delay;
        self
    }

    pub fn n(&self) -> f64 {
        self.n_queues as f64
    }

    /// λθ, the only combination of λ and θ the linear analysis depends on.
    pub fn lambda_theta(&self) -> f64 {
        self.lambda * self.theta
    }

    /// N / (λθ): the velocity weight at which the neutral term becomes critical.
    pub fn ratio_edge(&self) -> f64 {
        self.n() / self.lambda_theta()
    }
}

/// Instantaneous state of all queues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub time: f64,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

impl QueueState {
    pub fn new(time: f64, values: Vec<f64>, derivatives: Vec<f64>) -> Result<Self> {
        if values.len() != derivatives.len() {
            return Err(Error::Domain(format!(
                "values ({}) and derivatives ({}) differ in length",
                values.len(),
                derivatives.len()
            )));
        }
        ensure_finite("time", &[time])?;
        ensure_finite("values", &values)?;
        ensure_finite("derivatives", &derivatives)?;
        Ok(Self {
            time,
            values,
            derivatives,
        })
    }
}

/// The qualitative stability regimes of the equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabilityRegion {
    /// λθ < Nμ and δ > N/(λθ): unstable for every delay.
    RegionA,
    /// λθ ≤ Nμ and δ < N/(λθ): stable for every delay.
    RegionB,
    /// λθ > Nμ and δ > N/(λθ): unstable for every delay.
    RegionC,
    /// λθ > Nμ and δ < N/(λθ): stable below the first critical delay.
    RegionD,
    /// δ = N/(λθ) with δμ > 1: stable for every delay.
    EdgeStable,
    /// δ = N/(λθ) with δμ < 1: unstable for every delay.
    EdgeUnstable,
    /// δ = N/(λθ) with δμ = 1: purely imaginary spectrum.
    EdgeMarginal,
}

impl StabilityRegion {
    /// Short machine-friendly label used in CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            StabilityRegion::RegionA => "A",
            StabilityRegion::RegionB => "B",
            StabilityRegion::RegionC => "C",
            StabilityRegion::RegionD => "D",
            StabilityRegion::EdgeStable => "edge-stable",
            StabilityRegion::EdgeUnstable => "edge-unstable",
            StabilityRegion::EdgeMarginal => "edge-marginal",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            StabilityRegion::RegionA | StabilityRegion::RegionC => "never stable",
            StabilityRegion::RegionB | StabilityRegion::EdgeStable => "stable for all delays",
            StabilityRegion::RegionD => "stable below the first critical delay",
            StabilityRegion::EdgeUnstable => "never stable",
            StabilityRegion::EdgeMarginal => "marginal: purely imaginary spectrum",
        }
    }
}

fn ensure_finite(name: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Domain(format!(
            "{name}[{i}] is not finite ({})",
            xs[i]
        ))),
        None => Ok(()),
    }
}

fn ensure_len(name: &str, xs: &[f64], n: usize) -> Result<()> {
    if xs.len() != n {
        return Err(Error::Domain(format!(
            "{name} has length {}, expected {n}",
            xs.len()
        )));
    }
    Ok(())
}

/// Multinomial logit probabilities `p_i ∝ exp(-θ info_i)`.
pub fn mnl_probabilities(info: &[f64], theta: f64) -> Result<Vec<f64>> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::Domain(format!(
            "theta must be finite and > 0, got {theta}"
        )));
    }
    if info.is_empty() {
        return Err(Error::Domain("info is empty".into()));
    }
    ensure_finite("info", info)?;
    let mut out = info.to_vec();
    softmax_neg_in_place(&mut out, theta);
    Ok(out)
}

/// Replaces `buf` with `exp(-θ buf_i) / Σ exp(-θ buf_j)`, shifting by the
/// smallest entry so the largest exponent is zero.
pub(crate) fn softmax_neg_in_place(buf: &mut [f64], theta: f64) {
    let min = buf.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for x in buf.iter_mut() {
        *x = (-theta * (*x - min)).exp();
        sum += *x;
    }
    for x in buf.iter_mut() {
        *x /= sum;
    }
}

/// Announcement `q_i(t-Δ) + δ q̇_i(t-Δ)`.
pub fn announcement(q_delayed: &[f64], qdot_delayed: &[f64], delta: f64) -> Result<Vec<f64>> {
    ensure_len("qdot_delayed", qdot_delayed, q_delayed.len())?;
    ensure_finite("q_delayed", q_delayed)?;
    ensure_finite("qdot_delayed", qdot_delayed)?;
    ensure_finite("delta", &[delta])?;
    Ok(q_delayed
        .iter()
        .zip(qdot_delayed)
        .map(|(q, dq)| q + delta * dq)
        .collect())
}

/// Right-hand side `λ p_i(announcement) - μ q_i(t)`.
pub fn rhs(
    current: &[f64],
    delayed_values: &[f64],
    delayed_derivatives: &[f64],
    params: &SystemParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let n = params.n_queues;
    ensure_len("current", current, n)?;
    ensure_len("delayed_values", delayed_values, n)?;
    ensure_len("delayed_derivatives", delayed_derivatives, n)?;
    ensure_finite("current", current)?;
    ensure_finite("delayed_values", delayed_values)?;
    ensure_finite("delayed_derivatives", delayed_derivatives)?;
    let mut out = vec![0.0; n];
    rhs_into(
        current,
        delayed_values,
        delayed_derivatives,
        params,
        &mut out,
    );
    Ok(out)
}

/// Unchecked right-hand side for the integrator's inner loop.
#[inline]
pub(crate) fn rhs_into(
    current: &[f64],
    delayed_values: &[f64],
    delayed_derivatives: &[f64],
    params: &SystemParams,
    out: &mut [f64],
) {
    for ((o, q), dq) in out.iter_mut().zip(delayed_values).zip(delayed_derivatives) {
        *o = q + params.delta * dq;
    }
    softmax_neg_in_place(out, params.theta);
    for (o, q) in out.iter_mut().zip(current) {
        *o = params.lambda * *o - params.mu * q;
    }
}

/// The unique equilibrium queue length λ/(Nμ), shared by every queue.
pub fn equilibrium(params: &SystemParams) -> f64 {
    params.lambda / (params.n() * params.mu)
}

fn rel_cmp(a: f64, b: f64) -> std::cmp::Ordering {
    let scale = a.abs().max(b.abs());
    if (a - b).abs() <= REGION_TOLERANCE * scale {
        std::cmp::Ordering::Equal
    } else if a < b {
        std::cmp::Ordering::Less
    } else {
        std::cmp::Ordering::Greater
    }
}

/// Classifies the equilibrium's stability regime. The delay is ignored.
pub fn classify_region(params: &SystemParams) -> StabilityRegion {
    use std::cmp::Ordering::*;
    let lt = params.lambda_theta();
    let n_mu = params.n() * params.mu;
    let edge = params.ratio_edge();
    match rel_cmp(params.delta, edge) {
        Equal => match rel_cmp(params.delta * params.mu, 1.0) {
            Greater => StabilityRegion::EdgeStable,
            Less => StabilityRegion::EdgeUnstable,
            Equal => StabilityRegion::EdgeMarginal,
        },
        below_or_above => {
            let high_gain = rel_cmp(lt, n_mu) == Greater;
            match (high_gain, below_or_above) {
                (false, Less) => StabilityRegion::RegionB,
                (false, _) => StabilityRegion::RegionA,
                (true, Less) => StabilityRegion::RegionD,
                (true, _) => StabilityRegion::RegionC,
            }
        }
    }
}
