//! Benchmark fixtures shared by the criterion suites.

use nrdicke_core::{perturb, ModelParams, SystemState};

/// φ = 2π/3 at the benchmark cavity with a small spin dephasing.
pub fn frustrated(lam: f64) -> ModelParams {
    ModelParams::benchmark(0.05, 2.0 * std::f64::consts::PI / 3.0, lam)
}

pub fn kicked_normal() -> SystemState {
    perturb(&SystemState::normal(), 1e-3, 1)
}
