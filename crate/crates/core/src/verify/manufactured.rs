//! The manufactured solution on the unit square:
//!
//! ```text
//! u = cos(t) (sin^2(pi x) sin(2 pi y), -sin(2 pi x) sin^2(pi y))
//! p = cos(t) cos(pi x) cos(pi y)
//! ```
//!
//! `u` is solenoidal and vanishes on the walls, `p` has zero mean.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::grid::{FaceVectorField, Field, Location, StaggeredGrid};
use crate::stepper::Forcing;

/// Spatial velocity profile `U(x, y)`.
pub fn profile(x: f64, y: f64) -> (f64, f64) {
    let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
    (sx * sx * (2.0 * PI * y).sin(), -(2.0 * PI * x).sin() * sy * sy)
}

pub fn pressure_profile(x: f64, y: f64) -> f64 {
    (PI * x).cos() * (PI * y).cos()
}

/// Time factor `g(t) = cos t` and its derivative.
pub fn amplitude(t: f64) -> (f64, f64) {
    (t.cos(), -t.sin())
}

/// `f = g' U + g^2 (U . grad) U - nu g Lap U + g grad P` at one point.
pub fn forcing_at(t: f64, nu: f64, x: f64, y: f64) -> (f64, f64) {
    let (g, dg) = amplitude(t);
    let (u1, u2) = profile(x, y);
    let (s2x, s2y) = ((2.0 * PI * x).sin(), (2.0 * PI * y).sin());
    let (c2x, c2y) = ((2.0 * PI * x).cos(), (2.0 * PI * y).cos());
    let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
    let u1x = PI * s2x * s2y;
    let u1y = 2.0 * PI * sx * sx * c2y;
    let u2x = -2.0 * PI * c2x * sy * sy;
    let u2y = -PI * s2x * s2y;
    let lap1 = 2.0 * PI * PI * s2y * (2.0 * c2x - 1.0);
    let lap2 = -2.0 * PI * PI * s2x * (2.0 * c2y - 1.0);
    let px = -PI * sx * (PI * y).cos();
    let py = -PI * (PI * x).cos() * sy;
    (
        dg * u1 + g * g * (u1 * u1x + u2 * u1y) - nu * g * lap1 + g * px,
        dg * u2 + g * g * (u1 * u2x + u2 * u2y) - nu * g * lap2 + g * py,
    )
}

/// Face samples of `u(t)` (wall-normal entries zero) and the discretely
/// mean-free cell samples of `p(t)`.
pub fn exact_fields(t: f64, grid: &StaggeredGrid) -> (FaceVectorField, Field) {
    let (g, _) = amplitude(t);
    let u = FaceVectorField::sample_dirichlet(grid, |x, y| {
        let (a, b) = profile(x, y);
        (g * a, g * b)
    });
    let mut p = Field::from_fn(grid, Location::Cell, |x, y| g * pressure_profile(x, y));
    p.remove_mean();
    (u, p)
}

/// Face samples of the forcing.
pub fn forcing(t: f64, nu: f64, grid: &StaggeredGrid) -> FaceVectorField {
    FaceVectorField::sample_dirichlet(grid, |x, y| forcing_at(t, nu, x, y))
}

/// The forcing as a stepper callback.
pub fn forcing_fn(nu: f64) -> Forcing {
    Arc::new(move |t, g| forcing(t, nu, g))
}
