//! Mean-field engine for three collective spins coupled nonreciprocally
//! through a damped cavity mode.
//!
//! The crate integrates the equations of motion, finds and classifies
//! stationary phases, analyses their linear stability and exceptional
//! points, classifies nonstationary attractors, and runs parameter sweeps.

pub mod error;
pub mod model;
pub mod integrate;
pub mod eigen;
pub mod stability;
pub mod stationary;
pub mod dynamics;
pub mod energy;
pub mod sweep;
pub mod compensate;

pub use error::{Error, Result};
pub use model::{
    apply_symmetry, cavity_adiabatic, collective_coords, d_coupling, energy_eff, mean_field_energy,
    rhs_adiabatic, rhs_full, CollectiveCoords, Eom, ModelParams, Species, SpinVector, StateRate,
    SymmetryOp, SystemState,
};
pub use integrate::{integrate, perturb, IntegratorConfig, Mode, Trajectory};
pub use stationary::{
    census, find_all_stationary, newton_solve, Census, CensusOptions, FixedPoint, PhaseFlag, PhaseLabel, PhaseTag,
    SeedStrategy,
};
pub use stability::{assess, detect_ep, lambda_c, phi_c, DynMatrix, EpLocation, StabilityOptions, StabilityReport};
pub use dynamics::{
    classify_attractor, classify_run, fit_power_law, lyapunov_max, omega0_scaling, AttractorKind, AttractorVerdict,
    ClassifyConfig, PowerLawFit, ScalingReport,
};
pub use energy::{ground_phase, minimize_energy, GroundConfig};
pub use sweep::{resume, sweep, GridRange, PhaseRecord, SweepMode, SweepSpec};
pub use compensate::{make_plan, params_from_plan, CompensationPlan};
