//! Dissipation diagnostics and the stability inequalities of the relaxation step.

use serde::{Deserialize, Serialize};

use super::filter::FilterSpec;
use crate::error::Result;
use crate::grid::{inner, l2_norm, FaceVectorField};

/// `((G w, w), (c grad w, grad w))` with the coefficient frozen at `u_ind`.
pub fn dissipation_pair(w: &FaceVectorField, u_ind: &FaceVectorField, spec: &FilterSpec) -> Result<(f64, f64)> {
    let frozen = spec.freeze(u_ind)?;
    let mut w0 = w.clone();
    w0.enforce_boundary();
    let (gw, _) = frozen.fluctuation(&w0)?;
    Ok((inner(&gw, &w0)?, frozen.viscous_form(&w0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub chi: f64,
    /// `chi (G w, w)` against `|w|^2`.
    pub bound_lhs: f64,
    pub bound_rhs: f64,
    /// `chi |G w|^2` against `(G w, w)`.
    pub contraction_lhs: f64,
    pub contraction_rhs: f64,
    /// `|(G w, y) - (w, G y)|` and the scale `|w| |y|` it is measured against.
    pub adjoint_defect: f64,
    pub adjoint_scale: f64,
    /// Absolute slack allowed in the two inequalities.
    pub slack: f64,
    pub pass: bool,
}

impl StabilityReport {
    /// Smallest of the two inequality margins, `rhs - lhs`.
    pub fn margin(&self) -> f64 {
        (self.bound_rhs - self.bound_lhs).min(self.contraction_rhs - self.contraction_lhs)
    }
}

/// Relative slack for the inequalities and the self-adjointness test.
pub const STABILITY_RTOL: f64 = 1e-10;
pub const ADJOINT_RTOL: f64 = 1e-9;

/// Evaluates `chi (G w, w) <= |w|^2`, `chi |G w|^2 <= (G w, w)` and the
/// self-adjointness defect of `G` on the pair `(w, y)`.
pub fn check_stability_conditions(
    w: &FaceVectorField,
    y: &FaceVectorField,
    u_ind: &FaceVectorField,
    spec: &FilterSpec,
    chi: f64,
) -> Result<StabilityReport> {
    let frozen = spec.freeze(u_ind)?;
    let mut w0 = w.clone();
    w0.enforce_boundary();
    let mut y0 = y.clone();
    y0.enforce_boundary();
    let (gw, _) = frozen.fluctuation(&w0)?;
    let (gy, _) = frozen.fluctuation(&y0)?;
    let ww = inner(&w0, &w0)?;
    let gww = inner(&gw, &w0)?;
    let gwgw = inner(&gw, &gw)?;
    let adjoint_defect = (inner(&gw, &y0)? - inner(&w0, &gy)?).abs();
    let adjoint_scale = l2_norm(&w0) * l2_norm(&y0);
    let slack = STABILITY_RTOL * ww;
    let bound_lhs = chi * gww;
    let contraction_lhs = chi * gwgw;
    let pass = bound_lhs <= ww + slack
        && contraction_lhs <= gww + slack
        && gww >= -slack
        && adjoint_defect <= ADJOINT_RTOL * adjoint_scale;
    Ok(StabilityReport {
        chi,
        bound_lhs,
        bound_rhs: ww,
        contraction_lhs,
        contraction_rhs: gww,
        adjoint_defect,
        adjoint_scale,
        slack,
        pass,
    })
}
