//! Amplitude, period and convergence readouts from a trajectory.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::equilibrium;

pub const DEFAULT_WINDOW_FRACTION: f64 = 0.25;
/// Absolute threshold on `|q1 − q*|` below which a run counts as decayed.
pub const DECAY_THRESHOLD: f64 = 1e-3;
/// Relative spread of the last few half-swings accepted as settled.
pub const CONVERGENCE_SPREAD: f64 = 0.01;
const SETTLE_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationMeasurement {
    /// Half the mean peak-to-trough swing of `q1`.
    pub amplitude: f64,
    /// Mean spacing of successive peaks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    pub converged: bool,
    pub decayed: bool,
    pub peaks: usize,
    pub troughs: usize,
}

#[derive(Debug, Clone, Copy)]
struct Extremum {
    time: f64,
    value: f64,
    peak: bool,
}

/// Vertex of the parabola through three samples.
fn refine(t: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let (d1, d2) = (t[1] - t[0], t[2] - t[1]);
    let s1 = (y[1] - y[0]) / d1;
    let s2 = (y[2] - y[1]) / d2;
    let a = (s2 - s1) / (t[2] - t[0]);
    if a == 0.0 || !a.is_finite() {
        return (t[1], y[1]);
    }
    // y = y1 + b (x - t1) + a (x - t1)^2 with b the slope at t1
    let b = s1 + a * d1;
    let dx = (-b / (2.0 * a)).clamp(-d1, d2);
    (t[1] + dx, y[1] + b * dx + a * dx * dx)
}

fn extrema(times: &[f64], x: &[f64], dx: &[f64]) -> Vec<Extremum> {
    let mut out = Vec::new();
    for i in 0..dx.len().saturating_sub(1) {
        let (a, b) = (dx[i], dx[i + 1]);
        let peak = a > 0.0 && b <= 0.0;
        let trough = a < 0.0 && b >= 0.0;
        if !(peak || trough) {
            continue;
        }
        // centre the fit on the more extreme of the two bracketing nodes
        let better = if peak {
            x[i + 1] > x[i]
        } else {
            x[i + 1] < x[i]
        };
        let c = if better { i + 1 } else { i };
        if c == 0 || c + 1 >= x.len() {
            continue;
        }
        let (time, value) = refine(
            [times[c - 1], times[c], times[c + 1]],
            [x[c - 1], x[c], x[c + 1]],
        );
        if out
            .last()
            .is_some_and(|e: &Extremum| e.peak == peak && (e.time - time).abs() < 1e-12)
        {
            continue;
        }
        out.push(Extremum { time, value, peak });
    }
    out
}

/// Measures the trailing `window_fraction` of the trajectory.
pub fn measure(traj: &Trajectory, window_fraction: f64) -> Result<OscillationMeasurement> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "window_fraction must be in (0, 1], got {window_fraction}"
        )));
    }
    if traj.len() < 3 {
        return Err(Error::Inconclusive(
            "trajectory has fewer than 3 samples".into(),
        ));
    }
    let times = traj.times();
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let cut = t1 - window_fraction * (t1 - t0);
    let start = times.partition_point(|t| *t < cut);
    let qs = equilibrium(&traj.params);
    let x: Vec<f64> = traj.queue(0).skip(start).map(|q| q - qs).collect();
    let dx: Vec<f64> = traj.queue_derivative(0).skip(start).collect();
    let tw = &times[start..];

    let max_dev = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let decayed = max_dev < DECAY_THRESHOLD;
    let ext = extrema(tw, &x, &dx);
    let peaks: Vec<&Extremum> = ext.iter().filter(|e| e.peak).collect();
    let troughs: Vec<&Extremum> = ext.iter().filter(|e| !e.peak).collect();

    if peaks.len() < 2 || troughs.is_empty() {
        if decayed {
            let (lo, hi) = x
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                    (l.min(*v), h.max(*v))
                });
            return Ok(OscillationMeasurement {
                amplitude: 0.5 * (hi - lo),
                period: None,
                converged: false,
                decayed,
                peaks: peaks.len(),
                troughs: troughs.len(),
            });
        }
        return Err(Error::Inconclusive(format!(
            "{} peaks in the last {:.3} time units; extend the horizon",
            peaks.len(),
            t1 - cut
        )));
    }

    let mean = |v: &[&Extremum]| v.iter().map(|e| e.value).sum::<f64>() / v.len() as f64;
    let amplitude = 0.5 * (mean(&peaks) - mean(&troughs));
    let period = (peaks[peaks.len() - 1].time - peaks[0].time) / (peaks.len() - 1) as f64;

    // half swings from each peak to the trough that follows it
    let swings: Vec<f64> = ext
        .windows(2)
        .filter(|w| w[0].peak && !w[1].peak)
        .map(|w| 0.5 * (w[0].value - w[1].value))
        .collect();
    let last = &swings[swings.len().saturating_sub(SETTLE_COUNT)..];
    let settled = if last.len() >= 2 {
        let lo = last.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let avg = last.iter().sum::<f64>() / last.len() as f64;
        avg > 0.0 && (hi - lo) / avg < CONVERGENCE_SPREAD
    } else {
        false
    };

    Ok(OscillationMeasurement {
        amplitude,
        period: Some(period),
        converged: settled && !decayed,
        decayed,
        peaks: peaks.len(),
        troughs: troughs.len(),
    })
}

/// Angular frequency `2π / period` of a converged measurement.
pub fn measured_frequency(m: &OscillationMeasurement) -> Result<f64> {
    match (m.converged, m.period) {
        (true, Some(p)) if p > 0.0 => Ok(2.0 * PI / p),
        _ => Err(Error::State(
            "frequency needs a converged oscillation".into(),
        )),
    }
}
