//! Divergence, pressure gradient, the Neumann pressure Laplacian and the
//! cell-centred velocity gradient.

use super::{CellTensorField, FaceVectorField, Field, Location, StaggeredGrid};
use crate::error::Result;

/// MAC divergence `(u[i+1,j] - u[i,j]) / hx + (v[i,j+1] - v[i,j]) / hy`.
pub fn divergence(w: &FaceVectorField) -> Field {
    let g = *w.grid();
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = Field::zeros(&g, Location::Cell);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let d = (w.u.get(i + 1, j) - w.u.get(i, j)) / hx + (w.v.get(i, j + 1) - w.v.get(i, j)) / hy;
            out.set(i, j, d);
        }
    }
    out
}

/// Centred pressure gradient on interior faces; wall-normal faces get zero,
/// which is the homogeneous Neumann condition for `p`.
pub fn gradient_p(p: &Field) -> Result<FaceVectorField> {
    p.expect_loc(Location::Cell)?;
    let g = *p.grid();
    let (hx, hy) = (g.hx(), g.hy());
    let mut w = FaceVectorField::zeros(&g);
    for j in 0..g.ny() {
        for i in 1..g.nx() {
            w.u.set(i, j, (p.get(i, j) - p.get(i - 1, j)) / hx);
        }
    }
    for j in 1..g.ny() {
        for i in 0..g.nx() {
            w.v.set(i, j, (p.get(i, j) - p.get(i, j - 1)) / hy);
        }
    }
    Ok(w)
}

/// `-div grad` on cell-centred scalars with homogeneous Neumann data.
///
/// Symmetric positive semidefinite with the constants as its null space.
/// Equals `-divergence(gradient_p(p))` exactly.
#[derive(Debug, Clone, Copy)]
pub struct NeumannPoisson {
    grid: StaggeredGrid,
}

impl NeumannPoisson {
    pub fn new(grid: &StaggeredGrid) -> Self {
        Self { grid: *grid }
    }

    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let ihx2 = 1.0 / (self.grid.hx() * self.grid.hx());
        let ihy2 = 1.0 / (self.grid.hy() * self.grid.hy());
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let p0 = p[k];
                let mut s = 0.0;
                if i > 0 {
                    s += (p0 - p[k - 1]) * ihx2;
                }
                if i + 1 < nx {
                    s += (p0 - p[k + 1]) * ihx2;
                }
                if j > 0 {
                    s += (p0 - p[k - nx]) * ihy2;
                }
                if j + 1 < ny {
                    s += (p0 - p[k + nx]) * ihy2;
                }
                out[k] = s;
            }
        }
    }
}

/// Velocity gradient at cell centres.
///
/// Normal derivatives are the compact face differences. Cross derivatives
/// average the component to the cell centre and take centred differences,
/// falling back to one-sided differences in wall-adjacent cells so that no
/// boundary ghost enters the indicators.
pub fn grad_tensor(w: &FaceVectorField) -> CellTensorField {
    let g = *w.grid();
    let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
    let mut dudx = Field::zeros(&g, Location::Cell);
    let mut dudy = Field::zeros(&g, Location::Cell);
    let mut dvdx = Field::zeros(&g, Location::Cell);
    let mut dvdy = Field::zeros(&g, Location::Cell);
    let ubar = |i: usize, j: usize| 0.5 * (w.u.get(i, j) + w.u.get(i + 1, j));
    let vbar = |i: usize, j: usize| 0.5 * (w.v.get(i, j) + w.v.get(i, j + 1));
    let centred = |f: &dyn Fn(usize) -> f64, k: usize, n: usize, h: f64| -> f64 {
        if k == 0 {
            (f(1) - f(0)) / h
        } else if k + 1 == n {
            (f(n - 1) - f(n - 2)) / h
        } else {
            (f(k + 1) - f(k - 1)) / (2.0 * h)
        }
    };
    for j in 0..ny {
        for i in 0..nx {
            dudx.set(i, j, (w.u.get(i + 1, j) - w.u.get(i, j)) / hx);
            dvdy.set(i, j, (w.v.get(i, j + 1) - w.v.get(i, j)) / hy);
            dudy.set(i, j, centred(&|jj| ubar(i, jj), j, ny, hy));
            dvdx.set(i, j, centred(&|ii| vbar(ii, j), i, nx, hx));
        }
    }
    CellTensorField { dudx, dudy, dvdx, dvdy }
}
