//! Fluid model of `N` parallel infinite-server queues whose customers pick a
//! queue from a delayed announcement `q_i(t - Δ) + δ q̇_i(t - Δ)` through a
//! multinomial logit choice.
//!
//! The crate covers the whole numerical pipeline:
//!
//! - [`model`]: parameters, choice probabilities, the neutral DDE right-hand
//!   side, the equilibrium and the four-region stability classifier.
//! - [`integrator`]: method-of-steps RK4 integration of the neutral DDE.
//! - [`metrics`]: amplitude/period extraction from trajectories.
//! - [`spectral`]: the characteristic equation, Hopf points and root search.
//! - [`design`]: optimal and harmful velocity weights.
//! - [`amplitude`]: slow flow and Lindstedt amplitude estimates for `N = 2`.
//! - [`validation`]: the acceptance criteria, runnable from tests and the CLI.

// `!(x > 0.0)` is deliberate throughout: NaN has to fail those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amplitude;
pub mod design;
pub mod error;
pub mod integrator;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod spectral;
pub mod validation;

pub use amplitude::{AmplitudeEstimate, HopfSide, LindstedtCoefficients, SlowFlowCoefficients};
pub use design::{AmplitudeMinimizer, DesignSummary};
pub use error::{Error, Result};
pub use integrator::{HistorySegment, InitialHistory, PerturbationMode, Trajectory};
pub use metrics::OscillationMeasurement;
pub use model::{QueueState, StabilityRegion, SystemParams};
pub use spectral::{CharacteristicRoot, HopfPoint};
