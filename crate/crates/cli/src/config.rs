//! Run configuration read from a JSON file.

use std::path::Path;

use qvel_core::integrator::DEFAULT_STEPS_PER_DELAY;
use qvel_core::metrics::DEFAULT_WINDOW_FRACTION;
use qvel_core::{InitialHistory, PerturbationMode, SystemParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Largest number of points a sweep may contain.
pub const MAX_SWEEP_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: SystemParams,
    #[serde(default)]
    pub simulate: SimulateOptions,
    #[serde(default)]
    pub analyze: AnalyzeOptions,
    #[serde(default)]
    pub sweep: Option<SweepOptions>,
    #[serde(default)]
    pub validate: ValidateOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistorySpec {
    Constant {
        values: Vec<f64>,
    },
    EquilibriumPerturbed {
        epsilon: f64,
        mode: PerturbationMode,
    },
}

impl Default for HistorySpec {
    fn default() -> Self {
        HistorySpec::EquilibriumPerturbed {
            epsilon: 0.1,
            mode: PerturbationMode::Antisymmetric,
        }
    }
}

impl HistorySpec {
    pub fn to_initial(&self) -> InitialHistory {
        match self {
            HistorySpec::Constant { values } => InitialHistory::Constant(values.clone()),
            HistorySpec::EquilibriumPerturbed { epsilon, mode } => {
                InitialHistory::EquilibriumPerturbed {
                    epsilon: *epsilon,
                    mode: *mode,
                }
            }
        }
    }
}

fn default_steps() -> usize {
    DEFAULT_STEPS_PER_DELAY
}

fn default_window() -> f64 {
    DEFAULT_WINDOW_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOptions {
    /// Defaults to max(200/μ, 60Δ).
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps_per_delay: usize,
    #[serde(default)]
    pub history: HistorySpec,
    #[serde(default = "default_window")]
    pub window_fraction: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            horizon: None,
            steps_per_delay: DEFAULT_STEPS_PER_DELAY,
            history: HistorySpec::default(),
            window_fraction: DEFAULT_WINDOW_FRACTION,
        }
    }
}

fn default_branches() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeOptions {
    /// Number of critical-delay branches to report.
    #[serde(default = "default_branches")]
    pub branches: u32,
    /// Also scan for characteristic roots with positive real part at `params.delay`.
    #[serde(default)]
    pub scan_roots: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            branches: default_branches(),
            scan_roots: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisParam {
    Lambda,
    Mu,
    Theta,
    NQueues,
    Delta,
    Delay,
    /// Delay measured from the first critical delay at the point's other parameters.
    DelayOffset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: AxisParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    /// Outermost axis first.
    pub axes: Vec<SweepAxis>,
    /// Run a simulation per point and fill `amp_sim`.
    #[serde(default)]
    pub simulate: bool,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps_per_delay: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateOptions {
    /// Subset of criterion ids; all when empty.
    #[serde(default)]
    pub criteria: Vec<u32>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<(), CliError> {
        self.params
            .validate()
            .map_err(|e| CliError::Config(format!("params: {e}")))?;
        let s = &self.simulate;
        if let Some(h) = s.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(CliError::Config(format!(
                    "simulate.horizon must be > 0, got {h}"
                )));
            }
        }
        if !(s.window_fraction > 0.0 && s.window_fraction <= 1.0) {
            return Err(CliError::Config(format!(
                "simulate.window_fraction must be in (0, 1], got {}",
                s.window_fraction
            )));
        }
        if let Some(sw) = &self.sweep {
            if sw.axes.is_empty() || sw.axes.iter().any(|a| a.values.is_empty()) {
                return Err(CliError::Config("sweep grid is empty".into()));
            }
            let total = sw
                .axes
                .iter()
                .try_fold(1usize, |acc, a| acc.checked_mul(a.values.len()))
                .unwrap_or(usize::MAX);
            if total > MAX_SWEEP_POINTS {
                return Err(CliError::Config(format!(
                    "sweep has {total} points, limit is {MAX_SWEEP_POINTS}"
                )));
            }
            if let Some(h) = sw.horizon {
                if !(h.is_finite() && h > 0.0) {
                    return Err(CliError::Config(format!(
                        "sweep.horizon must be > 0, got {h}"
                    )));
                }
            }
            for a in &sw.axes {
                if a.values.iter().any(|v| !v.is_finite()) {
                    return Err(CliError::Config(format!(
                        "sweep axis {:?} has non-finite values",
                        a.param
                    )));
                }
                if a.param == AxisParam::NQueues
                    && a.values.iter().any(|v| v.fract() != 0.0 || *v < 2.0)
                {
                    return Err(CliError::Config(
                        "n_queues values must be integers >= 2".into(),
                    ));
                }
            }
            let mut seen = Vec::new();
            for a in &sw.axes {
                if seen.contains(&a.param) {
                    return Err(CliError::Config(format!(
                        "sweep axis {:?} repeated",
                        a.param
                    )));
                }
                seen.push(a.param);
            }
            if seen.contains(&AxisParam::Delay) && seen.contains(&AxisParam::DelayOffset) {
                return Err(CliError::Config(
                    "sweep cannot set both delay and delay_offset".into(),
                ));
            }
        }
        if let Some(bad) = self
            .validate
            .criteria
            .iter()
            .find(|c| !(1..=12).contains(*c))
        {
            return Err(CliError::Config(format!("no acceptance criterion {bad}")));
        }
        Ok(())
    }
}
