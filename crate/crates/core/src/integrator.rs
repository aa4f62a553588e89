//! Method-of-steps integration of the neutral system.
//!
//! The delay window `[kΔ, (k+1)Δ]` is split into `M` equal RK4 steps, so
//! every delayed lookup lands on a node (or a midpoint) of the previous
//! window. Each window keeps its own one-sided derivatives at both ends,
//! since a neutral equation carries derivative jumps at every `kΔ`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{equilibrium, rhs_into, SystemParams};

pub const DEFAULT_STEPS_PER_DELAY: usize = 64;
pub const MIN_STEPS_PER_DELAY: usize = 8;

/// Default horizon `max(200/μ, 60Δ)`.
pub fn default_horizon(params: &SystemParams) -> f64 {
    (200.0 / params.mu).max(60.0 * params.delay)
}

/// Sampled `(q, q̇)` on a strictly increasing grid, flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorySegment {
    n_queues: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    derivatives: Vec<f64>,
}

impl HistorySegment {
    /// Builds a segment from per-instant rows.
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>, derivatives: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Domain("history has no samples".into()));
        }
        if values.len() != times.len() || derivatives.len() != times.len() {
            return Err(Error::Domain(format!(
                "history has {} times, {} value rows, {} derivative rows",
                times.len(),
                values.len(),
                derivatives.len()
            )));
        }
        let n = values[0].len();
        if n == 0 {
            return Err(Error::Domain("history rows are empty".into()));
        }
        if values.iter().chain(&derivatives).any(|r| r.len() != n) {
            return Err(Error::Domain("history rows differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(
                "history times must be strictly increasing".into(),
            ));
        }
        let seg = Self {
            n_queues: n,
            times,
            values: values.concat(),
            derivatives: derivatives.concat(),
        };
        if seg
            .times
            .iter()
            .chain(&seg.values)
            .chain(&seg.derivatives)
            .any(|x| !x.is_finite())
        {
            return Err(Error::Domain("history contains non-finite entries".into()));
        }
        if let Some(v) = seg.values.iter().find(|v| **v < 0.0) {
            return Err(Error::Domain(format!("history value {v} is negative")));
        }
        Ok(seg)
    }

    /// Flat segment on `[-delay, 0]` (a single node when `delay == 0`).
    fn flat(values: Vec<f64>, delay: f64) -> Result<Self> {
        let n = values.len();
        if delay > 0.0 {
            Self::new(
                vec![-delay, 0.0],
                vec![values.clone(), values],
                vec![vec![0.0; n]; 2],
            )
        } else {
            Self::new(vec![0.0], vec![values], vec![vec![0.0; n]])
        }
    }

    pub fn n_queues(&self) -> usize {
        self.n_queues
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_queues..(i + 1) * self.n_queues]
    }

    pub fn derivative(&self, i: usize) -> &[f64] {
        &self.derivatives[i * self.n_queues..(i + 1) * self.n_queues]
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    fn interval(&self, t: f64) -> Result<usize> {
        let (a, b) = (self.start(), self.end());
        let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
        if t < a - slack || t > b + slack || self.len() < 2 {
            if self.len() == 1 && (t - a).abs() <= slack {
                return Ok(0);
            }
            return Err(Error::Domain(format!("t = {t} outside history [{a}, {b}]")));
        }
        let i = self.times.partition_point(|x| *x <= t);
        Ok(i.clamp(1, self.len() - 1) - 1)
    }

    /// Cubic Hermite interpolation of `q` at `t`.
    pub fn value_at(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let i = self.interval(t)?;
        if self.len() == 1 {
            out.copy_from_slice(self.value(0));
            return Ok(());
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let (y0, y1, d0, d1) = (
            self.value(i),
            self.value(i + 1),
            self.derivative(i),
            self.derivative(i + 1),
        );
        for (k, o) in out.iter_mut().enumerate() {
            *o = h00 * y0[k] + h * h10 * d0[k] + h01 * y1[k] + h * h11 * d1[k];
        }
        Ok(())
    }

    /// `q̇` at `t`: the stored sample on a node, otherwise the derivative of
    /// the Hermite interpolant.
    pub fn derivative_at(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let i = self.interval(t)?;
        if self.len() == 1 {
            out.copy_from_slice(self.derivative(0));
            return Ok(());
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let (y0, y1, d0, d1) = (
            self.value(i),
            self.value(i + 1),
            self.derivative(i),
            self.derivative(i + 1),
        );
        if s == 0.0 {
            out.copy_from_slice(d0);
            return Ok(());
        }
        if s == 1.0 {
            out.copy_from_slice(d1);
            return Ok(());
        }
        let g00 = 6.0 * s * (s - 1.0) / h;
        let g10 = (1.0 - s) * (1.0 - 3.0 * s);
        let g01 = -g00;
        let g11 = s * (3.0 * s - 2.0);
        for (k, o) in out.iter_mut().enumerate() {
            *o = g00 * y0[k] + g10 * d0[k] + g01 * y1[k] + g11 * d1[k];
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    /// `+ε` on queue 1, `−ε` on queue 2, equilibrium elsewhere.
    Antisymmetric,
    /// `+ε` on every queue.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialHistory {
    Constant(Vec<f64>),
    EquilibriumPerturbed {
        epsilon: f64,
        mode: PerturbationMode,
    },
    Custom(HistorySegment),
}

/// History on `[-Δ, 0]` for the given initial function.
pub fn make_history(kind: &InitialHistory, params: &SystemParams) -> Result<HistorySegment> {
    params.validate()?;
    let n = params.n_queues;
    match kind {
        InitialHistory::Constant(v) => {
            if v.len() != n {
                return Err(Error::Domain(format!(
                    "constant history has {} entries, expected {n}",
                    v.len()
                )));
            }
            HistorySegment::flat(v.clone(), params.delay)
        }
        InitialHistory::EquilibriumPerturbed { epsilon, mode } => {
            if !epsilon.is_finite() {
                return Err(Error::Domain(format!("epsilon {epsilon} is not finite")));
            }
            let q = equilibrium(params);
            let mut v = vec![q; n];
            match mode {
                PerturbationMode::Antisymmetric => {
                    v[0] += epsilon;
                    v[1] -= epsilon;
                }
                PerturbationMode::Uniform => v.iter_mut().for_each(|x| *x += epsilon),
            }
            HistorySegment::flat(v, params.delay)
        }
        InitialHistory::Custom(seg) => {
            if seg.n_queues() != n {
                return Err(Error::Domain(format!(
                    "custom history has {} queues, expected {n}",
                    seg.n_queues()
                )));
            }
            let tol = 1e-12 * (1.0 + params.delay);
            if seg.start() > -params.delay + tol || seg.end() < -tol {
                return Err(Error::Domain(format!(
                    "custom history covers [{}, {}], needs [-{}, 0]",
                    seg.start(),
                    seg.end(),
                    params.delay
                )));
            }
            Ok(seg.clone())
        }
    }
}

/// Integrated path on `[0, horizon]`, flattened row-major.
///
/// Breakpoints `kΔ` appear once, carrying the left-limit derivative; the
/// right limits are in [`Trajectory::breakpoint_right_derivative`]. The
/// sample at `t = 0` carries the right-hand side evaluated there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: SystemParams,
    pub steps_per_delay: usize,
    pub history: HistorySegment,
    times: Vec<f64>,
    values: Vec<f64>,
    derivatives: Vec<f64>,
    right_derivatives: Vec<f64>,
}

impl Trajectory {
    /// Wraps externally produced samples, e.g. synthetic signals or data read
    /// back from CSV. The history is the first sample alone.
    pub fn from_samples(
        params: SystemParams,
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        derivatives: Vec<Vec<f64>>,
    ) -> Result<Self> {
        params.validate()?;
        if values.first().map(Vec::len) != Some(params.n_queues) {
            return Err(Error::Domain(
                "sample rows must have n_queues entries".into(),
            ));
        }
        let probe = HistorySegment::new(times.clone(), values.clone(), derivatives.clone())?;
        let history = HistorySegment::new(
            vec![times[0]],
            vec![values[0].clone()],
            vec![derivatives[0].clone()],
        )?;
        Ok(Self {
            params,
            steps_per_delay: MIN_STEPS_PER_DELAY,
            history,
            times: probe.times,
            values: probe.values,
            derivatives: probe.derivatives,
            right_derivatives: Vec::new(),
        })
    }

    pub fn n_queues(&self) -> usize {
        self.params.n_queues
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, i: usize) -> &[f64] {
        let n = self.n_queues();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn derivative(&self, i: usize) -> &[f64] {
        let n = self.n_queues();
        &self.derivatives[i * n..(i + 1) * n]
    }

    /// Samples of queue `q` (0-based).
    pub fn queue(&self, q: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(q).step_by(self.n_queues()).copied()
    }

    /// Derivative samples of queue `q` (0-based).
    pub fn queue_derivative(&self, q: usize) -> impl Iterator<Item = f64> + '_ {
        self.derivatives
            .iter()
            .skip(q)
            .step_by(self.n_queues())
            .copied()
    }

    /// Right-limit derivative at breakpoint `kΔ`, if it lies in the trajectory.
    pub fn breakpoint_right_derivative(&self, k: usize) -> Option<&[f64]> {
        let n = self.n_queues();
        self.right_derivatives.get(k * n..(k + 1) * n)
    }

    /// Writes `t,q1..qN,dq1..dqN` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.n_queues();
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",q{i}"));
        }
        for i in 1..=n {
            header.push_str(&format!(",dq{i}"));
        }
        writeln!(w, "{header}")?;
        for i in 0..self.len() {
            write!(w, "{:.16e}", self.times[i])?;
            for x in self.value(i).iter().chain(self.derivative(i)) {
                write!(w, ",{x:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Integrates from `history` up to `horizon`.
pub fn integrate(
    params: &SystemParams,
    history: &HistorySegment,
    horizon: f64,
    steps_per_delay: usize,
) -> Result<Trajectory> {
    params.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be > 0, got {horizon}")));
    }
    if steps_per_delay < MIN_STEPS_PER_DELAY {
        return Err(Error::Domain(format!(
            "steps_per_delay must be >= {MIN_STEPS_PER_DELAY}, got {steps_per_delay}"
        )));
    }
    if history.n_queues() != params.n_queues {
        return Err(Error::Domain(format!(
            "history has {} queues, params have {}",
            history.n_queues(),
            params.n_queues
        )));
    }
    if params.delay > 0.0 {
        integrate_delayed(params, history, horizon, steps_per_delay)
    } else {
        integrate_undelayed(params, history, horizon, steps_per_delay)
    }
}

/// Weights of the 4-point cubic through samples of the previous window,
/// evaluated at the midpoint of step `j`.
fn midpoint_stencil(j: usize, m: usize) -> (usize, [f64; 4]) {
    if j == 0 {
        (0, [5.0 / 16.0, 15.0 / 16.0, -5.0 / 16.0, 1.0 / 16.0])
    } else if j == m - 1 {
        (m - 3, [1.0 / 16.0, -5.0 / 16.0, 15.0 / 16.0, 5.0 / 16.0])
    } else {
        (j - 1, [-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0])
    }
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

fn integrate_delayed(
    params: &SystemParams,
    history: &HistorySegment,
    horizon: f64,
    m: usize,
) -> Result<Trajectory> {
    let n = params.n_queues;
    let delay = params.delay;
    let h = delay / m as f64;
    let windows = ((horizon / delay) * (1.0 - 1e-14)).ceil().max(1.0) as usize;
    let t_end = horizon * (1.0 + 1e-12);

    // previous window on its uniform grid
    let mut prev_q = vec![0.0; (m + 1) * n];
    let mut prev_d = vec![0.0; (m + 1) * n];
    for j in 0..=m {
        let t = if j == m { 0.0 } else { -delay + j as f64 * h };
        history.value_at(t, &mut prev_q[j * n..(j + 1) * n])?;
        history.derivative_at(t, &mut prev_d[j * n..(j + 1) * n])?;
    }
    let mut cur_q = vec![0.0; (m + 1) * n];
    let mut cur_d = vec![0.0; (m + 1) * n];

    let cap = (windows * m + 1).min((t_end / h) as usize + 2);
    let mut times = Vec::with_capacity(cap);
    let mut values = Vec::with_capacity(cap * n);
    let mut derivatives = Vec::with_capacity(cap * n);
    let mut right_derivatives = Vec::with_capacity((windows + 1) * n);

    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut ym, mut dm, mut stage) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);

    let mut q0 = vec![0.0; n];
    history.value_at(0.0, &mut q0)?;
    cur_q[..n].copy_from_slice(&q0);

    for k in 0..windows {
        let t0 = k as f64 * delay;
        if k > 0 {
            cur_q[..n].copy_from_slice(&prev_q[m * n..]);
        }
        {
            let (c0, _) = cur_d.split_at_mut(n);
            rhs_into(&cur_q[..n], &prev_q[..n], &prev_d[..n], params, c0);
        }
        if !all_finite(&cur_d[..n]) {
            return Err(Error::IntegrationDiverged {
                last_valid_time: t0,
            });
        }
        right_derivatives.extend_from_slice(&cur_d[..n]);
        if k == 0 {
            times.push(0.0);
            values.extend_from_slice(&cur_q[..n]);
            derivatives.extend_from_slice(&cur_d[..n]);
        }
        for j in 0..m {
            let a = j * n;
            let b = (j + 1) * n;
            let (y0, y1) = (&prev_q[a..b], &prev_q[b..b + n]);
            let (d0, d1) = (&prev_d[a..b], &prev_d[b..b + n]);
            let (s, wts) = midpoint_stencil(j, m);
            for i in 0..n {
                ym[i] = 0.5 * (y0[i] + y1[i]) + h / 8.0 * (d0[i] - d1[i]);
                dm[i] = (0..4).map(|r| wts[r] * prev_d[(s + r) * n + i]).sum();
            }
            let q = &cur_q[a..b];
            k1.copy_from_slice(&cur_d[a..b]);
            for i in 0..n {
                stage[i] = q[i] + 0.5 * h * k1[i];
            }
            rhs_into(&stage, &ym, &dm, params, &mut k2);
            for i in 0..n {
                stage[i] = q[i] + 0.5 * h * k2[i];
            }
            rhs_into(&stage, &ym, &dm, params, &mut k3);
            for i in 0..n {
                stage[i] = q[i] + h * k3[i];
            }
            rhs_into(&stage, y1, d1, params, &mut k4);
            let (head, tail) = cur_q.split_at_mut(b);
            let q = &head[a..b];
            for i in 0..n {
                tail[i] = q[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let (_, dtail) = cur_d.split_at_mut(b);
            rhs_into(&tail[..n], y1, d1, params, &mut dtail[..n]);
            let t = if j + 1 == m {
                (k + 1) as f64 * delay
            } else {
                t0 + (j + 1) as f64 * h
            };
            if !all_finite(&tail[..n]) || !all_finite(&dtail[..n]) {
                return Err(Error::IntegrationDiverged {
                    last_valid_time: t - h,
                });
            }
            if t <= t_end {
                times.push(t);
                values.extend_from_slice(&tail[..n]);
                derivatives.extend_from_slice(&dtail[..n]);
            }
        }
        std::mem::swap(&mut prev_q, &mut cur_q);
        std::mem::swap(&mut prev_d, &mut cur_d);
    }

    Ok(Trajectory {
        params: *params,
        steps_per_delay: m,
        history: history.clone(),
        times,
        values,
        derivatives,
        right_derivatives,
    })
}

/// Solves `k = rhs(q, q, k)` for the implicit derivative when Δ = 0 by
/// under-relaxed fixed-point iteration.
fn implicit_rate(params: &SystemParams, q: &[f64], guess: &mut [f64], scratch: &mut [f64]) -> bool {
    for _ in 0..500 {
        rhs_into(q, q, guess, params, scratch);
        let mut diff: f64 = 0.0;
        let mut size: f64 = 0.0;
        for (g, s) in guess.iter_mut().zip(scratch.iter()) {
            diff = diff.max((*g - s).abs());
            size = size.max(s.abs());
            *g = 0.5 * (*g + s);
        }
        if !diff.is_finite() {
            return false;
        }
        if diff <= 1e-14 * (1.0 + size) {
            rhs_into(q, q, guess, params, scratch);
            guess.copy_from_slice(scratch);
            return true;
        }
    }
    false
}

/// Plain RK4 with absolute step `0.01/μ`, rounded so the horizon is a node.
fn integrate_undelayed(
    params: &SystemParams,
    history: &HistorySegment,
    horizon: f64,
    m: usize,
) -> Result<Trajectory> {
    let n = params.n_queues;
    let steps = (horizon * params.mu / 0.01).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let mut q = vec![0.0; n];
    history.value_at(0.0, &mut q)?;
    let mut d = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let (mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let diverged = |t: f64| Error::IntegrationDiverged { last_valid_time: t };
    if !implicit_rate(params, &q, &mut d, &mut scratch) {
        return Err(diverged(0.0));
    }
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity((steps + 1) * n);
    let mut derivatives = Vec::with_capacity((steps + 1) * n);
    times.push(0.0);
    values.extend_from_slice(&q);
    derivatives.extend_from_slice(&d);
    for s in 0..steps {
        let t = s as f64 * h;
        let k1 = d.clone();
        for i in 0..n {
            stage[i] = q[i] + 0.5 * h * k1[i];
        }
        k2.copy_from_slice(&k1);
        if !implicit_rate(params, &stage, &mut k2, &mut scratch) {
            return Err(diverged(t));
        }
        for i in 0..n {
            stage[i] = q[i] + 0.5 * h * k2[i];
        }
        k3.copy_from_slice(&k2);
        if !implicit_rate(params, &stage, &mut k3, &mut scratch) {
            return Err(diverged(t));
        }
        for i in 0..n {
            stage[i] = q[i] + h * k3[i];
        }
        k4.copy_from_slice(&k3);
        if !implicit_rate(params, &stage, &mut k4, &mut scratch) {
            return Err(diverged(t));
        }
        for i in 0..n {
            q[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !all_finite(&q) || !implicit_rate(params, &q, &mut d, &mut scratch) {
            return Err(diverged(t));
        }
        times.push(if s + 1 == steps {
            horizon
        } else {
            (s + 1) as f64 * h
        });
        values.extend_from_slice(&q);
        derivatives.extend_from_slice(&d);
    }
    Ok(Trajectory {
        params: *params,
        steps_per_delay: m,
        history: history.clone(),
        times,
        values,
        derivatives,
        right_derivatives: Vec::new(),
    })
}

/// Largest deviation of `Σq` from the exact solution of `S' = λ − μS`.
pub fn conservation_residual(traj: &Trajectory) -> f64 {
    let p = &traj.params;
    let target = p.lambda / p.mu;
    let s0: f64 = traj.value(0).iter().sum::<f64>() - target;
    (0..traj.len())
        .map(|i| {
            let s: f64 = traj.value(i).iter().sum();
            (s - target - s0 * (-p.mu * traj.times()[i]).exp()).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::delta_cr;

    fn fig(delay: f64) -> SystemParams {
        SystemParams::figure(0.0, delay)
    }

    fn anti(eps: f64) -> InitialHistory {
        InitialHistory::EquilibriumPerturbed {
            epsilon: eps,
            mode: PerturbationMode::Antisymmetric,
        }
    }

    #[test]
    fn constant_history_is_flat() {
        let p = fig(0.5);
        let h = make_history(&InitialHistory::Constant(vec![5.0, 5.0]), &p).unwrap();
        assert_eq!(h.times(), &[-0.5, 0.0]);
        assert_eq!(h.value(0), &[5.0, 5.0]);
        assert_eq!(h.derivative(1), &[0.0, 0.0]);
    }

    #[test]
    fn perturbed_history_examples() {
        let p = fig(0.5);
        let h = make_history(&anti(0.1), &p).unwrap();
        assert!((h.value(0)[0] - 5.1).abs() < 1e-15 && (h.value(1)[1] - 4.9).abs() < 1e-15);
        assert!(matches!(
            make_history(&anti(10.0), &p),
            Err(Error::Domain(_))
        ));
        let p3 = SystemParams::new(6.0, 1.0, 1.0, 3, 0.0, 0.5).unwrap();
        let h3 = make_history(&anti(0.5), &p3).unwrap();
        assert_eq!(h3.value(0), &[2.5, 1.5, 2.0]);
    }

    #[test]
    fn equilibrium_stays_put() {
        for delay in [0.0, 0.2, 1.3] {
            let p = SystemParams::figure(0.1, delay);
            let h = make_history(&InitialHistory::Constant(vec![5.0, 5.0]), &p).unwrap();
            let tr = integrate(&p, &h, 20.0, 16).unwrap();
            for i in 0..tr.len() {
                assert!(tr.value(i).iter().all(|q| (q - 5.0).abs() < 1e-12));
            }
            assert!(conservation_residual(&tr) < 1e-12);
        }
    }

    #[test]
    fn breakpoints_are_nodes() {
        let p = SystemParams::figure(0.1, 0.37);
        let h = make_history(&anti(0.1), &p).unwrap();
        let tr = integrate(&p, &h, 10.0, 16).unwrap();
        for k in 0..=(10.0 / 0.37) as usize {
            let t = k as f64 * 0.37;
            assert!(tr.times().contains(&t), "breakpoint {t} missing");
        }
        assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
        assert!(*tr.times().last().unwrap() <= 10.0 * (1.0 + 1e-12));
        assert!(tr.breakpoint_right_derivative(1).is_some());
    }

    #[test]
    fn stored_derivative_is_rhs() {
        let p = SystemParams::figure(0.15, 0.4);
        let h = make_history(&anti(0.3), &p).unwrap();
        let tr = integrate(&p, &h, 3.0, 16).unwrap();
        // interior node of the second window: delayed node sits in the first window
        let i = 16 + 5;
        let t = tr.times()[i];
        let j = tr
            .times()
            .iter()
            .position(|x| (x - (t - 0.4)).abs() < 1e-12)
            .unwrap();
        let r = crate::model::rhs(tr.value(i), tr.value(j), tr.derivative(j), &p).unwrap();
        for (a, b) in r.iter().zip(tr.derivative(i)) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn history_reproduced_at_nodes() {
        let p = SystemParams::figure(0.1, 0.4);
        let times: Vec<f64> = (0..=8).map(|j| -0.4 + 0.05 * j as f64).collect();
        let vals: Vec<Vec<f64>> = times
            .iter()
            .map(|t| vec![5.0 + t.sin(), 5.0 - t.sin()])
            .collect();
        let ders: Vec<Vec<f64>> = times.iter().map(|t| vec![t.cos(), -t.cos()]).collect();
        let seg = HistorySegment::new(times.clone(), vals.clone(), ders).unwrap();
        let h = make_history(&InitialHistory::Custom(seg), &p).unwrap();
        let tr = integrate(&p, &h, 2.0, 8).unwrap();
        let mut out = [0.0; 2];
        for (t, v) in times.iter().zip(&vals) {
            tr.history.value_at(*t, &mut out).unwrap();
            assert_eq!(&out[..], &v[..]);
        }
        assert_eq!(tr.value(0), &vals[8][..]);
    }

    #[test]
    fn custom_history_must_cover_window() {
        let p = SystemParams::figure(0.1, 0.4);
        let seg = HistorySegment::new(
            vec![-0.2, 0.0],
            vec![vec![5.0, 5.0]; 2],
            vec![vec![0.0; 2]; 2],
        )
        .unwrap();
        assert!(make_history(&InitialHistory::Custom(seg), &p).is_err());
    }

    #[test]
    fn decays_below_and_oscillates_above_critical_delay() {
        let dc = delta_cr(&fig(0.0), 0).unwrap();
        let p = fig(0.9 * dc);
        let tr = integrate(&p, &make_history(&anti(0.1), &p).unwrap(), 200.0, 64).unwrap();
        let tail: f64 = tr
            .queue(0)
            .zip(tr.times())
            .filter(|(_, t)| **t > 150.0)
            .map(|(q, _)| (q - 5.0).abs())
            .fold(0.0, f64::max);
        assert!(tail < 1e-3, "{tail}");

        let p = fig(1.1 * dc);
        let tr = integrate(&p, &make_history(&anti(0.1), &p).unwrap(), 200.0, 64).unwrap();
        let (lo, hi) = tr
            .queue(0)
            .zip(tr.times())
            .filter(|(_, t)| **t >= 150.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (q, _)| {
                (lo.min(q), hi.max(q))
            });
        assert!((hi - lo) / 2.0 > 0.05);
    }

    #[test]
    fn uniform_perturbation_tracks_exact_total() {
        let p = SystemParams::figure(0.1, 0.5);
        let h = make_history(
            &InitialHistory::EquilibriumPerturbed {
                epsilon: 0.5,
                mode: PerturbationMode::Uniform,
            },
            &p,
        )
        .unwrap();
        let tr = integrate(&p, &h, 10.0, 64).unwrap();
        assert!(conservation_residual(&tr) < 1e-8);
        let i = tr.len() - 1;
        assert!((tr.times()[i] - 10.0).abs() < 1e-12);
        let dev = tr.value(i).iter().sum::<f64>() - 10.0;
        assert!((dev - (-10f64).exp()).abs() < 1e-8);
    }

    /// Independent retarded-DDE reference: RK4 where every delayed value comes
    /// from a per-step cubic Hermite piece of the stored path.
    fn retarded_reference(p: &SystemParams, eps: f64, horizon: f64, m: usize) -> Vec<(f64, f64)> {
        type Piece = (f64, f64, [f64; 2], [f64; 2], [f64; 2], [f64; 2]);
        let h = p.delay / m as f64;
        let q0 = equilibrium(p);
        let f = |q: [f64; 2], qd: [f64; 2]| {
            let a = (-p.theta * qd[0]).exp();
            let b = (-p.theta * qd[1]).exp();
            [
                p.lambda * a / (a + b) - p.mu * q[0],
                p.lambda * b / (a + b) - p.mu * q[1],
            ]
        };
        let lookup = |pieces: &[Piece], t: f64| -> [f64; 2] {
            let (t0, t1, y0, y1, d0, d1) = *pieces
                .iter()
                .find(|pc| t >= pc.0 - 1e-12 && t <= pc.1 + 1e-12)
                .unwrap();
            let hh = t1 - t0;
            let s = (t - t0) / hh;
            let mut out = [0.0; 2];
            for k in 0..2 {
                out[k] = (1.0 + 2.0 * s) * (1.0 - s).powi(2) * y0[k]
                    + hh * s * (1.0 - s).powi(2) * d0[k]
                    + s * s * (3.0 - 2.0 * s) * y1[k]
                    + hh * s * s * (s - 1.0) * d1[k];
            }
            out
        };
        let flat = [q0 + eps, q0 - eps];
        let mut pieces: Vec<Piece> = vec![(-p.delay, 0.0, flat, flat, [0.0; 2], [0.0; 2])];
        let steps = (horizon / h).round() as usize;
        let mut out = vec![];
        let mut q = flat;
        let mut k1 = f(q, lookup(&pieces, -p.delay));
        for s in 0..steps {
            let t = s as f64 * h;
            let yd_m = lookup(&pieces, t + 0.5 * h - p.delay);
            let yd_e = lookup(&pieces, t + h - p.delay);
            let add = |a: [f64; 2], b: [f64; 2], c: f64| [a[0] + c * b[0], a[1] + c * b[1]];
            let k2 = f(add(q, k1, 0.5 * h), yd_m);
            let k3 = f(add(q, k2, 0.5 * h), yd_m);
            let k4 = f(add(q, k3, h), yd_e);
            let start = q;
            for k in 0..2 {
                q[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
            }
            let end_slope = f(q, yd_e);
            pieces.push((t, t + h, start, q, k1, end_slope));
            // the next step starts from the right limit at the node
            let next_delayed = lookup(&pieces, t + h - p.delay + 1e-13);
            k1 = f(q, next_delayed);
            out.push((t + h, q[0]));
        }
        out
    }

    #[test]
    fn retarded_case_matches_reference() {
        let p = fig(0.5);
        let tr = integrate(&p, &make_history(&anti(0.2), &p).unwrap(), 20.0, 16).unwrap();
        let reference = retarded_reference(&p, 0.2, 20.0, 16);
        let mut worst: f64 = 0.0;
        for (t, q) in reference {
            let i = tr
                .times()
                .iter()
                .position(|x| (x - t).abs() < 1e-9)
                .unwrap();
            worst = worst.max((tr.value(i)[0] - q).abs());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn undelayed_branch_decays() {
        let p = SystemParams::figure(0.1, 0.0);
        let h = make_history(&anti(0.5), &p).unwrap();
        let tr = integrate(&p, &h, 20.0, 64).unwrap();
        let last = tr.value(tr.len() - 1);
        assert!((last[0] - 5.0).abs() < 1e-6);
        assert!(conservation_residual(&tr) < 1e-10);
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = fig(0.5);
        let h = make_history(&anti(0.1), &p).unwrap();
        assert!(integrate(&p, &h, 0.0, 64).is_err());
        assert!(integrate(&p, &h, 10.0, 4).is_err());
    }

    #[test]
    fn csv_layout() {
        let p = fig(0.5);
        let h = make_history(&anti(0.1), &p).unwrap();
        let tr = integrate(&p, &h, 1.0, 8).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "t,q1,q2,dq1,dq2");
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|x| x.parse().unwrap())
            .collect();
        assert_eq!(row[1], tr.value(0)[0]);
        assert_eq!(s.lines().count(), tr.len() + 1);
        assert!(!s.contains('\r'));
    }
}
