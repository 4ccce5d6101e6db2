//! Collocation analysis and input-decoupling charts for Lagrangian systems
//! with input-affine actuation, together with built-in models, a fixed-step
//! simulator and regulators that act in the decoupled coordinates.

pub mod collocation;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod models;
pub mod numeric;
pub mod quadrature;
pub mod simulate;
pub mod spatial;

pub use collocation::{
    build_chart, check_integrability, integrate_passive_output, transform_force, verify_power_invariance,
    ChartOptions, CoordinateChart, IntegrabilityReport, PathIntegrator, Regime, SamplingDomain, Verdict,
};
pub use dynamics::{
    forward_dynamics, hamiltonian, power_balance_residual, ActuationModel, Backbone, ConfigState,
    DynamicsTerms, MechanicalModel, Plant,
};
pub use error::{Error, Result};
pub use control::{
    equilibrium_unactuated, Controller, Gains, GainsConfig, IntegralState, Measurement, PSatID, PdPlusFeedforward,
    PdPlusQSpace, Target, ZeroInput,
};
pub use experiment::{expand_runs, run, run_all, ExperimentConfig, RunOutput, RunSummary};
pub use models::{build_plant, MODEL_NAMES};
pub use simulate::{integrate, ReferenceSchedule, ReferenceStep, Sample, SimOptions, ThetaSource, Trajectory};
