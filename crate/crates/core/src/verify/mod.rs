//! Manufactured solutions, error measurement, refinement studies, the
//! property suite and the dense oracles behind them.

mod convergence;
mod fields;
mod manufactured;
mod oracle;
mod properties;

pub use convergence::{
    convergence_study, measure_errors, rates, ConvergenceRow, ConvergenceTable, ErrorRecord, StudyConfig, StudyDelta,
    Verdict, FLOOR_RATE, RATE_P_MIN, RATE_V_BAND,
};
pub use fields::{random_solenoidal, white_noise};
pub use manufactured::{amplitude, exact_fields, forcing, forcing_at, forcing_fn, pressure_profile, profile};
pub use oracle::{chorin_step, dense_filter, dense_momentum, dense_projection};
pub use properties::{
    default_indicators, lower_bound_constant, property_suite, CheckResult, PropertyConfig, PropertyReport, ADJOINT_TOL,
    DENSE_TOL, DUAL_SLACK, LOWER_BOUND_DRIFT, LOWER_BOUND_MIN, REL_SLACK,
};
