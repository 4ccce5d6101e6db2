//! Integrability testing of `A(q)ᵀ`, passive-output integration and the
//! decoupling coordinate charts.

mod chart;
mod integrability;
mod path;

pub use chart::{
    build_chart, select_rows, transform_force, verify_power_invariance, ChartDiagnostics, ChartOptions,
    ChartSummary, CoordinateChart, Regime, UnactuatedComplement,
};
pub use integrability::{
    check_integrability, column_asymmetry, ColumnReport, IntegrabilityReport, SamplingDomain, Verdict,
    DEFAULT_SAMPLES, DEFAULT_SEED, DEFAULT_TOLERANCE,
};
pub use path::{integrate_passive_output, PathIntegrator};
