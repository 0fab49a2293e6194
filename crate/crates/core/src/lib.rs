//! Filter-stabilized projection solver for the 2D incompressible
//! Navier-Stokes equations on a staggered (MAC) grid.
//!
//! Each time step solves a linearized momentum problem, projects onto
//! discretely divergence-free fields, and relaxes the result towards a
//! nonlinear differential filter of itself. The relaxation acts as an
//! eddy-viscosity model whose strength is controlled by an indicator
//! functional.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod filters;
pub mod grid;
pub mod linsolve;
pub mod stepper;
pub mod verify;

pub use error::{Error, Result};
pub use filters::{DeltaRule, FilterSpec, IndicatorKind};
pub use grid::{CellScalarField, CellTensorField, FaceVectorField, Field, Location, StaggeredGrid};
pub use linsolve::{SolveStats, SolverConfig};
pub use stepper::{FilterMode, FlowState, StepReport, StepperConfig};
pub use verify::{ConvergenceTable, ErrorRecord};
