//! The four subcommands and their report types.

use std::io::Write;

use qvel_core::amplitude::second_order_amplitude;
use qvel_core::design::{delta_amp, design_summary};
use qvel_core::integrator::{conservation_residual, default_horizon, integrate, make_history};
use qvel_core::metrics::measure;
use qvel_core::model::classify_region;
use qvel_core::spectral::{
    default_scan_extent, delta_cr, hopf_point, omega_cr, right_half_plane_roots,
};
use qvel_core::validation::{run_criterion, CriterionOutcome, CRITERIA};
use qvel_core::{
    AmplitudeEstimate, AmplitudeMinimizer, CharacteristicRoot, DesignSummary, Error, HopfPoint,
    InitialHistory, OscillationMeasurement, PerturbationMode, StabilityRegion, SystemParams,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AxisParam, RunConfig, SweepOptions};
use crate::{CliError, Format};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub params: SystemParams,
    pub horizon: f64,
    pub steps_per_delay: usize,
    pub samples: usize,
    pub region: StabilityRegion,
    pub conservation_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<OscillationMeasurement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_error: Option<String>,
}

/// Integrates the configured run. The trajectory goes to `sink`, the summary
/// is returned for stdout.
pub fn simulate(
    cfg: &RunConfig,
    format: Format,
    sink: &mut dyn Write,
) -> Result<SimulateSummary, CliError> {
    let p = cfg.params;
    let opts = &cfg.simulate;
    let history = make_history(&opts.history.to_initial(), &p)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let horizon = opts.horizon.unwrap_or_else(|| default_horizon(&p));
    let traj = integrate(&p, &history, horizon, opts.steps_per_delay).map_err(|e| match e {
        Error::IntegrationDiverged { last_valid_time } => CliError::Diverged { last_valid_time },
        other => CliError::Config(other.to_string()),
    })?;
    match format {
        Format::Csv => traj.write_csv(&mut *sink)?,
        Format::Json => {
            serde_json::to_writer(&mut *sink, &traj).map_err(std::io::Error::from)?;
            writeln!(sink)?;
        }
    }
    let (measurement, measurement_error) = match measure(&traj, opts.window_fraction) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SimulateSummary {
        params: p,
        horizon,
        steps_per_delay: opts.steps_per_delay,
        samples: traj.len(),
        region: classify_region(&p),
        conservation_residual: conservation_residual(&traj),
        measurement,
        measurement_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub params: SystemParams,
    pub region: StabilityRegion,
    pub stability: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_cr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hopf_points: Option<Vec<HopfPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<AmplitudeEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_amp: Option<AmplitudeMinimizer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unstable_roots: Option<Vec<CharacteristicRoot>>,
}

pub fn analyze(cfg: &RunConfig) -> Result<AnalyzeReport, CliError> {
    let p = cfg.params;
    let region = classify_region(&p);
    let omega = omega_cr(&p);
    let hopf_points = match omega {
        Some(_) => Some(
            (0..cfg.analyze.branches)
                .map(|k| hopf_point(&p, k))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Config(e.to_string()))?,
        )
        .filter(|v: &Vec<HopfPoint>| !v.is_empty()),
        None => None,
    };
    let high_gain = p.lambda_theta() > p.n() * p.mu;
    let design = if high_gain {
        design_summary(&p).ok()
    } else {
        None
    };
    let two = p.n_queues == 2 && p.delay > 0.0;
    let amplitude = if two && omega.is_some() {
        second_order_amplitude(&p, p.delay).ok()
    } else {
        None
    };
    let delta_amp = if two && high_gain {
        delta_amp(&p, p.delay).ok()
    } else {
        None
    };
    let unstable_roots = if cfg.analyze.scan_roots && p.delay > 0.0 {
        Some(
            right_half_plane_roots(&p, default_scan_extent(&p))
                .map_err(|e| CliError::Config(e.to_string()))?,
        )
    } else {
        None
    };
    Ok(AnalyzeReport {
        params: p,
        region,
        stability: region.description().to_string(),
        omega_cr: omega,
        hopf_points,
        design,
        amplitude,
        delta_amp,
        unstable_roots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub mu: f64,
    pub theta: f64,
    pub n_queues: usize,
    pub delta: f64,
    pub delay: Option<f64>,
    pub region: Option<String>,
    pub omega_cr: Option<f64>,
    pub delta_cr0: Option<f64>,
    pub amp_sim: Option<f64>,
    pub amp_o1: Option<f64>,
    pub amp_o2: Option<f64>,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: [&str; 13] = [
    "lambda",
    "mu",
    "theta",
    "n_queues",
    "delta",
    "delay",
    "region",
    "omega_cr",
    "delta_cr0",
    "amp_sim",
    "amp_o1",
    "amp_o2",
    "error",
];

/// Grid points in row order, outermost axis first.
fn grid(opts: &SweepOptions) -> Vec<Vec<(AxisParam, f64)>> {
    let mut points: Vec<Vec<(AxisParam, f64)>> = vec![Vec::new()];
    for axis in &opts.axes {
        points = points
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut row = prefix.clone();
                    row.push((axis.param, *v));
                    row
                })
            })
            .collect();
    }
    points
}

fn sweep_point(base: &SystemParams, point: &[(AxisParam, f64)], opts: &SweepOptions) -> SweepRow {
    let mut p = *base;
    let mut offset = None;
    for (param, v) in point {
        match param {
            AxisParam::Lambda => p.lambda = *v,
            AxisParam::Mu => p.mu = *v,
            AxisParam::Theta => p.theta = *v,
            AxisParam::NQueues => p.n_queues = *v as usize,
            AxisParam::Delta => p.delta = *v,
            AxisParam::Delay => p.delay = *v,
            AxisParam::DelayOffset => offset = Some(*v),
        }
    }
    let mut row = SweepRow {
        lambda: p.lambda,
        mu: p.mu,
        theta: p.theta,
        n_queues: p.n_queues,
        delta: p.delta,
        delay: Some(p.delay),
        region: None,
        omega_cr: None,
        delta_cr0: None,
        amp_sim: None,
        amp_o1: None,
        amp_o2: None,
        error: None,
    };
    let mut errors: Vec<String> = Vec::new();
    if offset.is_some() {
        row.delay = None;
    }
    if let Err(e) = p.validate() {
        row.error = Some(e.to_string());
        return row;
    }
    row.region = Some(classify_region(&p).label().to_string());
    row.omega_cr = omega_cr(&p);
    if row.omega_cr.is_some() {
        match delta_cr(&p, 0) {
            Ok(d) => row.delta_cr0 = Some(d),
            Err(e) => errors.push(e.to_string()),
        }
    }
    if let Some(off) = offset {
        match row.delta_cr0 {
            Some(d) if d + off >= 0.0 => {
                p.delay = d + off;
                row.delay = Some(p.delay);
            }
            Some(d) => errors.push(format!("delay {} is negative", d + off)),
            None => errors.push("delay_offset needs a critical delay".into()),
        }
    }
    if row.delay.is_some() && p.n_queues == 2 && row.omega_cr.is_some() && p.delta * p.mu < 1.0 {
        match second_order_amplitude(&p, p.delay) {
            Ok(e) => {
                row.amp_o1 = Some(e.first_order);
                row.amp_o2 = Some(e.second_order);
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    if opts.simulate && row.delay.is_some() {
        let sim = make_history(
            &InitialHistory::EquilibriumPerturbed {
                epsilon: 0.1,
                mode: PerturbationMode::Antisymmetric,
            },
            &p,
        )
        .and_then(|h| {
            integrate(
                &p,
                &h,
                opts.horizon.unwrap_or_else(|| default_horizon(&p)),
                opts.steps_per_delay,
            )
        })
        .and_then(|t| measure(&t, 0.25));
        match sim {
            Ok(m) => row.amp_sim = Some(m.amplitude),
            Err(e) => errors.push(e.to_string()),
        }
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    let opts = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no sweep section".into()))?;
    let points = grid(opts);
    Ok(points
        .par_iter()
        .map(|pt| sweep_point(&cfg.params, pt, opts))
        .collect())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.16e}"))
}

pub fn write_sweep(
    rows: &[SweepRow],
    format: Format,
    sink: &mut dyn Write,
) -> Result<(), CliError> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *sink, rows).map_err(std::io::Error::from)?;
            writeln!(sink)?;
        }
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(sink);
            w.write_record(SWEEP_HEADER).map_err(std::io::Error::from)?;
            for r in rows {
                w.write_record([
                    format!("{:.16e}", r.lambda),
                    format!("{:.16e}", r.mu),
                    format!("{:.16e}", r.theta),
                    r.n_queues.to_string(),
                    format!("{:.16e}", r.delta),
                    fmt_opt(r.delay),
                    r.region.clone().unwrap_or_default(),
                    fmt_opt(r.omega_cr),
                    fmt_opt(r.delta_cr0),
                    fmt_opt(r.amp_sim),
                    fmt_opt(r.amp_o1),
                    fmt_opt(r.amp_o2),
                    r.error.clone().unwrap_or_default(),
                ])
                .map_err(std::io::Error::from)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub criteria: Vec<CriterionOutcome>,
}

pub fn validate(cfg: &RunConfig) -> ValidationReport {
    let ids: Vec<u32> = if cfg.validate.criteria.is_empty() {
        CRITERIA.iter().map(|(id, _)| *id).collect()
    } else {
        cfg.validate.criteria.clone()
    };
    let criteria: Vec<CriterionOutcome> = ids
        .par_iter()
        .map(|id| run_criterion(*id).expect("ids checked when the config was loaded"))
        .collect();
    ValidationReport {
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}

pub fn write_validation(
    report: &ValidationReport,
    format: Format,
    sink: &mut dyn Write,
) -> Result<(), CliError> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *sink, report).map_err(std::io::Error::from)?;
            writeln!(sink)?;
        }
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(sink);
            w.write_record(["id", "name", "passed", "measured", "threshold", "detail"])
                .map_err(std::io::Error::from)?;
            for c in &report.criteria {
                w.write_record([
                    c.id.to_string(),
                    c.name.clone(),
                    c.passed.to_string(),
                    fmt_opt(c.measured),
                    format!("{:.16e}", c.threshold),
                    c.detail.clone(),
                ])
                .map_err(std::io::Error::from)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
