//! The acceptance checks, shared by the `acceptance` test target and the
//! CLI `validate` command. Every threshold below is fixed.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitude::{first_order_amplitude, second_order_amplitude};
use crate::design::{
    d_delta_cr_d_delta, delta_amp, delta_amp_with, design_summary, AmplitudeOrder,
};
use crate::error::{Error, Result};
use crate::integrator::{
    conservation_residual, integrate, make_history, HistorySegment, InitialHistory,
    PerturbationMode, Trajectory,
};
use crate::metrics::{measure, measured_frequency, DECAY_THRESHOLD};
use crate::model::{classify_region, equilibrium, StabilityRegion, SystemParams};
use crate::scalar::golden_section;
use crate::spectral::{characteristic_residual, delta_cr, hopf_point};

pub const HOPF_RESIDUAL_TOL: f64 = 1e-9;
pub const OSCILLATION_FLOOR: f64 = 0.05;
pub const FREQUENCY_TOL: f64 = 0.05;
pub const SCALING_TOL: f64 = 0.10;
pub const FIRST_ORDER_TOL: f64 = 0.15;
pub const SECOND_ORDER_RATIO: f64 = 0.2;
pub const GOLDEN_MATCH_TOL: f64 = 1e-6;
pub const SLOPE_AT_ZERO_TOL: f64 = 1e-10;
pub const SLOPE_FD_TOL: f64 = 1e-6;
pub const CONSERVATION_TOL: f64 = 1e-8;
pub const MIN_ORDER: f64 = 3.7;
pub const CAP_OFFSET: f64 = 0.01;
pub const AMP_DELTA_RANGE: (f64, f64) = (0.08, 0.14);
pub const FIRST_ORDER_DELTA_FLOOR: f64 = 0.17;

const STEPS: usize = 64;
const EPSILON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    /// The quantity compared against `threshold`; absent when the run errored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured: Option<f64>,
    pub threshold: f64,
    pub detail: String,
}

pub const CRITERIA: [(u32, &str); 12] = [
    (1, "hopf residual"),
    (2, "stability flip by simulation"),
    (3, "frequency match"),
    (4, "supercritical scaling"),
    (5, "first-order amplitude"),
    (6, "second-order superiority"),
    (7, "design orderings"),
    (8, "concavity and slope"),
    (9, "conservation and order"),
    (10, "harm threshold"),
    (11, "amplitude-minimising weight"),
    (12, "region behaviour"),
];

fn outcome(
    id: u32,
    passed: bool,
    measured: f64,
    threshold: f64,
    detail: String,
) -> CriterionOutcome {
    let name = CRITERIA[(id - 1) as usize].1.to_string();
    CriterionOutcome {
        id,
        name,
        passed,
        measured: measured.is_finite().then_some(measured),
        threshold,
        detail,
    }
}

fn failed(id: u32, threshold: f64, e: Error) -> CriterionOutcome {
    outcome(id, false, f64::NAN, threshold, format!("error: {e}"))
}

/// Runs one criterion by number.
pub fn run_criterion(id: u32) -> Result<CriterionOutcome> {
    let r = match id {
        1 => hopf_residual(),
        2 => stability_flip(),
        3 => frequency_match(),
        4 => supercritical_scaling(),
        5 => first_order(),
        6 => second_order_superiority(),
        7 => design_orderings(),
        8 => concavity(),
        9 => conservation(),
        10 => harm_threshold(),
        11 => amplitude_weight(),
        12 => region_behaviour(),
        _ => return Err(Error::Domain(format!("no criterion {id}"))),
    };
    Ok(r)
}

/// Runs every criterion; results come back in id order.
pub fn run_all() -> Vec<CriterionOutcome> {
    CRITERIA
        .par_iter()
        .map(|(id, _)| run_criterion(*id).expect("id from the table"))
        .collect()
}

fn antisymmetric(eps: f64) -> InitialHistory {
    InitialHistory::EquilibriumPerturbed {
        epsilon: eps,
        mode: PerturbationMode::Antisymmetric,
    }
}

fn simulate(params: &SystemParams, horizon: f64) -> Result<Trajectory> {
    let h = make_history(&antisymmetric(EPSILON), params)?;
    integrate(params, &h, horizon, STEPS)
}

/// Largest `|q1 − q*|` over the last quarter of the run.
fn tail_deviation(traj: &Trajectory) -> f64 {
    let t_end = *traj.times().last().unwrap_or(&0.0);
    let cut = 0.75 * t_end;
    let qs = equilibrium(&traj.params);
    traj.queue(0)
        .zip(traj.times())
        .filter(|(_, t)| **t >= cut)
        .map(|(q, _)| (q - qs).abs())
        .fold(0.0, f64::max)
}

/// Simulated steady amplitude of `q1` at `delay`.
pub fn simulated_amplitude(params: &SystemParams, horizon: f64) -> Result<f64> {
    let tr = simulate(params, horizon)?;
    Ok(measure(&tr, 0.25)?.amplitude)
}

fn figure(delta: f64) -> SystemParams {
    SystemParams::figure(delta, 0.0)
}

fn hopf_residual() -> CriterionOutcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for lambda in [12.0, 16.0, 24.0, 40.0] {
        for mu in [0.5, 1.0, 1.5, 2.0] {
            for n in [2usize, 3, 5] {
                for frac in [0.0, 0.4, 0.8] {
                    let base = SystemParams {
                        lambda,
                        mu,
                        theta: 1.0,
                        n_queues: n,
                        delta: 0.0,
                        delay: 0.0,
                    };
                    let p = base.with_delta(frac * base.ratio_edge());
                    if classify_region(&p) != StabilityRegion::RegionD {
                        return outcome(
                            1,
                            false,
                            f64::NAN,
                            HOPF_RESIDUAL_TOL,
                            format!("{p:?} not in region D"),
                        );
                    }
                    for k in 0..3 {
                        match hopf_point(&p, k) {
                            Ok(hp) => {
                                let r = characteristic_residual(
                                    Complex64::new(0.0, hp.omega_cr),
                                    &p.with_delay(hp.delta_cr),
                                );
                                worst = worst.max(r.norm());
                                count += 1;
                            }
                            Err(e) => return failed(1, HOPF_RESIDUAL_TOL, e),
                        }
                    }
                }
            }
        }
    }
    outcome(
        1,
        worst < HOPF_RESIDUAL_TOL,
        worst,
        HOPF_RESIDUAL_TOL,
        format!("max |Phi(i w_cr)| over {count} Hopf points"),
    )
}

fn stability_flip() -> CriterionOutcome {
    let run = || -> Result<(f64, f64, f64)> {
        let dc = delta_cr(&figure(0.0), 0)?;
        let below = simulate(&figure(0.0).with_delay(0.9 * dc), 200.0)?;
        let above = simulate(&figure(0.0).with_delay(1.1 * dc), 200.0)?;
        let final_dev = (below.value(below.len() - 1)[0] - 5.0).abs();
        Ok((
            dc,
            final_dev.max(tail_deviation(&below)),
            measure(&above, 0.25)?.amplitude,
        ))
    };
    match run() {
        Ok((dc, dev, amp)) => outcome(
            2,
            dev < DECAY_THRESHOLD && amp > OSCILLATION_FLOOR,
            amp,
            OSCILLATION_FLOOR,
            format!("delta_cr = {dc:.6}; deviation at 0.9x over t in [150,200] = {dev:.2e}; amplitude at 1.1x = {amp:.4}"),
        ),
        Err(e) => failed(2, OSCILLATION_FLOOR, e),
    }
}

fn frequency_match() -> CriterionOutcome {
    let run = || -> Result<(f64, f64)> {
        let hp = hopf_point(&figure(0.0), 0)?;
        let tr = simulate(&figure(0.0).with_delay(1.02 * hp.delta_cr), 600.0)?;
        let w = measured_frequency(&measure(&tr, 0.25)?)?;
        Ok((w, hp.omega_cr))
    };
    match run() {
        Ok((w, w0)) => {
            let rel = (w - w0).abs() / w0;
            outcome(
                3,
                rel < FREQUENCY_TOL,
                rel,
                FREQUENCY_TOL,
                format!("measured omega {w:.5} vs omega_cr {w0:.5}"),
            )
        }
        Err(e) => failed(3, FREQUENCY_TOL, e),
    }
}

fn supercritical_scaling() -> CriterionOutcome {
    let run = || -> Result<(f64, f64)> {
        let dc = delta_cr(&figure(0.0), 0)?;
        let a = simulated_amplitude(&figure(0.0).with_delay(dc + 0.01), 1000.0)?;
        let b = simulated_amplitude(&figure(0.0).with_delay(dc + 0.04), 1000.0)?;
        Ok((a, b))
    };
    match run() {
        Ok((a, b)) => {
            let ratio = b / a;
            let err = (ratio - 2.0).abs() / 2.0;
            outcome(
                4,
                err <= SCALING_TOL,
                err,
                SCALING_TOL,
                format!("amp(0.01) = {a:.5}, amp(0.04) = {b:.5}, ratio {ratio:.4}"),
            )
        }
        Err(e) => failed(4, SCALING_TOL, e),
    }
}

fn first_order() -> CriterionOutcome {
    let run = || -> Result<(f64, f64)> {
        let d = delta_cr(&figure(0.0), 0)? + 0.2;
        let sim = simulated_amplitude(&figure(0.0).with_delay(d), 300.0)?;
        Ok((sim, first_order_amplitude(&figure(0.0), d)?))
    };
    match run() {
        Ok((sim, pred)) => {
            let rel = (sim - pred).abs() / pred;
            outcome(
                5,
                rel <= FIRST_ORDER_TOL,
                rel,
                FIRST_ORDER_TOL,
                format!("simulated {sim:.5} vs R1/2 = {pred:.5}"),
            )
        }
        Err(e) => failed(5, FIRST_ORDER_TOL, e),
    }
}

/// One point of the amplitude grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSample {
    pub delta: f64,
    pub alpha: f64,
    pub simulated: f64,
    pub first_order: f64,
    pub second_order: f64,
}

/// Simulated and predicted amplitudes on δ ∈ {0, .05, .1, .15, .19} × α ∈ {.05, .1, .2}.
pub fn amplitude_grid() -> Result<Vec<AmplitudeSample>> {
    let points: Vec<(f64, f64)> = [0.0, 0.05, 0.10, 0.15, 0.19]
        .iter()
        .flat_map(|d| [0.05, 0.1, 0.2].map(|a| (*d, a)))
        .collect();
    points
        .par_iter()
        .map(|&(delta, alpha)| {
            let p = figure(delta);
            let delay = delta_cr(&p, 0)? + alpha;
            let est = second_order_amplitude(&p, delay)?;
            Ok(AmplitudeSample {
                delta,
                alpha,
                simulated: simulated_amplitude(&p.with_delay(delay), 300.0)?,
                first_order: est.first_order,
                second_order: est.second_order,
            })
        })
        .collect()
}

fn second_order_superiority() -> CriterionOutcome {
    match amplitude_grid() {
        Ok(grid) => {
            let worst = |f: fn(&AmplitudeSample) -> f64| {
                grid.iter()
                    .map(|s| (f(s) - s.simulated).abs())
                    .fold(0.0, f64::max)
            };
            let e1 = worst(|s| s.first_order);
            let e2 = worst(|s| s.second_order);
            let ratio = e2 / e1;
            outcome(
                6,
                e2 <= e1 && ratio <= SECOND_ORDER_RATIO,
                ratio,
                SECOND_ORDER_RATIO,
                format!("max error first order {e1:.4}, second order {e2:.4}"),
            )
        }
        Err(e) => failed(6, SECOND_ORDER_RATIO, e),
    }
}

fn design_orderings() -> CriterionOutcome {
    let mut worst_gap: f64 = 0.0;
    for lambda in [5.0, 8.0, 10.0, 15.0, 20.0] {
        for mu in [0.25, 0.5, 1.0, 1.5, 2.0] {
            let p = SystemParams {
                lambda,
                mu,
                theta: 1.0,
                n_queues: 2,
                delta: 0.0,
                delay: 0.0,
            };
            let s = match design_summary(&p) {
                Ok(s) => s,
                Err(e) => return failed(7, GOLDEN_MATCH_TOL, e),
            };
            let edge = p.ratio_edge();
            let chain = 0.0 < s.delta_1
                && s.delta_1 < s.delta_max
                && s.delta_max < s.delta_2
                && s.delta_2 < s.delta_cap
                && s.delta_cap < edge
                && s.delay_1 < s.delay_cr_at_max
                && s.delay_cr_at_max < s.delay_2;
            if !chain {
                return outcome(
                    7,
                    false,
                    f64::NAN,
                    GOLDEN_MATCH_TOL,
                    format!("ordering broken at lambda={lambda}, mu={mu}: {s:?}"),
                );
            }
            let (xg, _) = golden_section(
                |d| delta_cr(&p.with_delta(d), 0).map_or(f64::INFINITY, |v| -v),
                0.0,
                (1.0 - 1e-6) * edge,
                1e-10,
            );
            worst_gap = worst_gap.max((xg - s.delta_max).abs());
        }
    }
    outcome(
        7,
        worst_gap < GOLDEN_MATCH_TOL,
        worst_gap,
        GOLDEN_MATCH_TOL,
        "orderings hold on all 25 points; value is max |golden - bisection| for delta_max".into(),
    )
}

fn concavity() -> CriterionOutcome {
    let p = figure(0.0);
    let edge = p.ratio_edge();
    let run = || -> Result<(f64, f64, bool)> {
        let s0 = d_delta_cr_d_delta(&p, 0.0)?;
        let mut prev = f64::INFINITY;
        let mut decreasing = true;
        let mut worst: f64 = 0.0;
        let h = 1e-6;
        for i in 0..100 {
            let d = 0.99 * edge * i as f64 / 99.0;
            let s = d_delta_cr_d_delta(&p, d)?;
            decreasing &= s < prev;
            prev = s;
            if d >= h {
                let fd = (delta_cr(&p.with_delta(d + h), 0)? - delta_cr(&p.with_delta(d - h), 0)?)
                    / (2.0 * h);
                worst = worst.max((fd - s).abs() / s.abs().max(1.0));
            }
        }
        Ok(((s0 - 1.0).abs(), worst, decreasing))
    };
    match run() {
        Ok((at_zero, worst, decreasing)) => outcome(
            8,
            decreasing && at_zero < SLOPE_AT_ZERO_TOL && worst < SLOPE_FD_TOL,
            worst,
            SLOPE_FD_TOL,
            format!("strictly decreasing: {decreasing}; |slope(0) - 1| = {at_zero:.1e}"),
        ),
        Err(e) => failed(8, SLOPE_FD_TOL, e),
    }
}

fn uniform_run(delay: f64, steps: usize, horizon: f64) -> Result<Trajectory> {
    let p = figure(0.1).with_delay(delay);
    let h = make_history(
        &InitialHistory::EquilibriumPerturbed {
            epsilon: 0.5,
            mode: PerturbationMode::Uniform,
        },
        &p,
    )?;
    integrate(&p, &h, horizon, steps)
}

/// Max |q1| difference between a run and a finer reference on shared nodes.
fn self_error(coarse: &Trajectory, fine: &Trajectory) -> f64 {
    let ratio = fine.steps_per_delay / coarse.steps_per_delay;
    (0..coarse.len())
        .map(|i| (coarse.value(i)[0] - fine.value(i * ratio)[0]).abs())
        .fold(0.0, f64::max)
}

fn conservation() -> CriterionOutcome {
    let run = || -> Result<(f64, f64, f64)> {
        let fine = uniform_run(0.5, 64, 10.0)?;
        let residual = conservation_residual(&fine);
        let e8 = conservation_residual(&uniform_run(1.0, 8, 10.0)?);
        let e16 = conservation_residual(&uniform_run(1.0, 16, 10.0)?);
        let order = (e8 / e16).log2();
        // the same check on q1 itself exercises the delayed interpolation
        let p = figure(0.1).with_delay(1.0);
        let h = make_history(&antisymmetric(0.5), &p)?;
        let runs: Vec<Trajectory> = [8usize, 16, 128]
            .iter()
            .map(|m| integrate(&p, &h, 10.0, *m))
            .collect::<Result<_>>()?;
        let q_order = (self_error(&runs[0], &runs[2]) / self_error(&runs[1], &runs[2])).log2();
        Ok((residual, order, q_order))
    };
    match run() {
        Ok((residual, order, q_order)) => outcome(
            9,
            residual < CONSERVATION_TOL && order >= MIN_ORDER && q_order >= MIN_ORDER,
            order.min(q_order),
            MIN_ORDER,
            format!("residual at 64 steps {residual:.2e}; order of sum {order:.3}; order of q1 {q_order:.3}"),
        ),
        Err(e) => failed(9, MIN_ORDER, e),
    }
}

fn harm_threshold() -> CriterionOutcome {
    let p = figure(0.0);
    let run = || -> Result<(f64, f64, f64)> {
        let s = design_summary(&p)?;
        let below = delta_cr(&p.with_delta(s.delta_cap - CAP_OFFSET), 0)? - s.delay_cr_0;
        let above = delta_cr(&p.with_delta(s.delta_cap + CAP_OFFSET), 0)? - s.delay_cr_0;
        Ok((s.delta_cap, below, above))
    };
    match run() {
        Ok((cap, below, above)) => outcome(
            10,
            below > 0.0 && above < 0.0,
            cap,
            CAP_OFFSET,
            format!("delta_cap = {cap:.6}; residual at -0.01: {below:.3e}, at +0.01: {above:.3e}"),
        ),
        Err(e) => failed(10, CAP_OFFSET, e),
    }
}

fn amplitude_weight() -> CriterionOutcome {
    let p = figure(0.0);
    let run = || -> Result<(f64, f64)> {
        Ok((
            delta_amp(&p, 0.5)?.delta,
            delta_amp_with(&p, 0.5, AmplitudeOrder::First)?.delta,
        ))
    };
    match run() {
        Ok((second, first)) => outcome(
            11,
            second > AMP_DELTA_RANGE.0
                && second < AMP_DELTA_RANGE.1
                && first > FIRST_ORDER_DELTA_FLOOR,
            second,
            AMP_DELTA_RANGE.1,
            format!("second-order minimiser {second:.5}; first-order minimiser {first:.5}"),
        ),
        Err(e) => failed(11, AMP_DELTA_RANGE.1, e),
    }
}

/// A smooth nonconstant start on `[-delay, 0]` around the equilibrium.
fn wavy_history(p: &SystemParams, amp: f64) -> Result<HistorySegment> {
    let q = equilibrium(p);
    let n = 32;
    let times: Vec<f64> = (0..=n)
        .map(|i| -p.delay + p.delay * i as f64 / n as f64)
        .collect();
    let k = 2.0 * std::f64::consts::PI / p.delay;
    let values = times
        .iter()
        .map(|t| vec![q + amp * (k * t).sin(), q - amp * (k * t).sin()])
        .collect();
    let derivs = times
        .iter()
        .map(|t| vec![amp * k * (k * t).cos(), -amp * k * (k * t).cos()])
        .collect();
    HistorySegment::new(times, values, derivs)
}

fn region_behaviour() -> CriterionOutcome {
    let stable = SystemParams {
        lambda: 1.0,
        mu: 1.0,
        theta: 1.0,
        n_queues: 2,
        delta: 0.0,
        delay: 0.0,
    };
    let run = || -> Result<(f64, f64)> {
        let mut worst: f64 = 0.0;
        for delay in [0.1, 1.0, 5.0] {
            let p = stable.with_delay(delay);
            let q = equilibrium(&p);
            let starts = vec![
                antisymmetric(0.2 * q),
                antisymmetric(0.9 * q),
                InitialHistory::EquilibriumPerturbed {
                    epsilon: 0.5 * q,
                    mode: PerturbationMode::Uniform,
                },
                InitialHistory::Custom(wavy_history(&p, 0.5 * q)?),
            ];
            for s in &starts {
                let h = make_history(s, &p)?;
                let horizon = (200.0 / p.mu).max(60.0 * delay);
                let tr = integrate(&p, &h, horizon, STEPS)?;
                worst = worst.max(tail_deviation(&tr));
            }
        }
        let edge = figure(0.2).with_delay(0.5);
        let dev = match simulate(&edge, 200.0) {
            Ok(tr) => tail_deviation(&tr),
            Err(Error::IntegrationDiverged { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        Ok((worst, dev))
    };
    match run() {
        Ok((worst, dev)) => outcome(
            12,
            worst < DECAY_THRESHOLD && dev >= DECAY_THRESHOLD,
            worst,
            DECAY_THRESHOLD,
            format!(
                "region B worst tail deviation {worst:.2e}; edge-unstable tail deviation {dev:.3e}"
            ),
        ),
        Err(e) => failed(12, DECAY_THRESHOLD, e),
    }
}
