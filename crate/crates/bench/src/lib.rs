//! Shared fixtures for the criterion benches.

use qvel_core::integrator::make_history;
use qvel_core::{HistorySegment, InitialHistory, PerturbationMode, SystemParams};

/// Figure parameters just past the first critical delay, with the
/// antisymmetric start used throughout the test suite.
pub fn oscillating_case() -> (SystemParams, HistorySegment) {
    let p = SystemParams::figure(0.1, 0.5);
    let h = make_history(
        &InitialHistory::EquilibriumPerturbed {
            epsilon: 0.1,
            mode: PerturbationMode::Antisymmetric,
        },
        &p,
    )
    .expect("figure parameters admit the perturbation");
    (p, h)
}

/// A parameter set with unstable characteristic roots for every delay.
pub fn never_stable_case() -> SystemParams {
    SystemParams {
        lambda: 1.0,
        mu: 1.0,
        theta: 1.0,
        n_queues: 2,
        delta: 3.0,
        delay: 0.5,
    }
}
