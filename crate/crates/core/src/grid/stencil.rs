//! Matrix-free 5-point stencils acting on one staggered component.
//!
//! Both operators are built once for a frozen coefficient (diffusion) or a
//! frozen advecting velocity (advection) and then applied many times inside
//! Krylov iterations. Edge data is precomputed so the hot loop is a plain
//! gather.

use super::{FaceVectorField, Field, Location, StaggeredGrid};
use crate::error::{Error, Result};

/// Neighbour value along one direction at index `k` (may be out of range).
///
/// Wall-normal face entries read as zero; past the end of a cell-centred
/// direction we use the reflected ghost `-w0`, which puts a zero at the wall.
#[inline(always)]
fn neighbour(values: &[f64], k: usize, active: bool, inside: bool, w0: f64) -> f64 {
    if !inside {
        -w0
    } else if active {
        values[k]
    } else {
        0.0
    }
}

/// Discrete `-div(c grad w)` for one component with homogeneous Dirichlet data.
///
/// The cell-centred coefficient `c` is carried to stencil edges by arithmetic
/// averaging of the adjacent cells that exist. The resulting matrix is
/// symmetric positive semidefinite (definite when `c > 0`).
#[derive(Debug, Clone)]
pub struct VarDiffusion {
    grid: StaggeredGrid,
    loc: Location,
    mx: usize,
    my: usize,
    // x-edge e lies between points e-1 and e: (mx + 1) * my entries
    ex: Vec<f64>,
    // y-edge e lies between points e-1 and e: mx * (my + 1) entries
    ey: Vec<f64>,
}

impl VarDiffusion {
    pub fn new(loc: Location, coeff: &Field) -> Result<Self> {
        coeff.expect_loc(Location::Cell)?;
        let grid = *coeff.grid();
        let (nx, ny) = (grid.nx(), grid.ny());
        for j in 0..ny {
            for i in 0..nx {
                let c = coeff.get(i, j);
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(Error::NegativeCoefficient { i, j, value: c });
                }
            }
        }
        let cell = |i: isize, j: isize| -> Option<f64> {
            if i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny {
                Some(coeff.get(i as usize, j as usize))
            } else {
                None
            }
        };
        let mean = |cells: &[(isize, isize)]| -> f64 {
            let (s, n) = cells
                .iter()
                .filter_map(|&(i, j)| cell(i, j))
                .fold((0.0, 0usize), |(s, n), c| (s + c, n + 1));
            if n == 0 {
                0.0
            } else {
                s / n as f64
            }
        };

        let (mx, my) = grid.shape(loc);
        let mut ex = vec![0.0; (mx + 1) * my];
        let mut ey = vec![0.0; mx * (my + 1)];
        for j in 0..my {
            for e in 0..=mx {
                let (ei, jj) = (e as isize, j as isize);
                ex[j * (mx + 1) + e] = match loc {
                    // between faces e-1 and e: the center of cell e-1
                    Location::U => mean(&[(ei - 1, jj)]),
                    // grid node (e, j)
                    Location::V => mean(&[(ei - 1, jj - 1), (ei, jj - 1), (ei - 1, jj), (ei, jj)]),
                    // face (e, j)
                    Location::Cell => mean(&[(ei - 1, jj), (ei, jj)]),
                };
            }
        }
        for e in 0..=my {
            for i in 0..mx {
                let (ii, ej) = (i as isize, e as isize);
                ey[e * mx + i] = match loc {
                    Location::U => mean(&[(ii - 1, ej - 1), (ii, ej - 1), (ii - 1, ej), (ii, ej)]),
                    Location::V => mean(&[(ii, ej - 1)]),
                    Location::Cell => mean(&[(ii, ej - 1), (ii, ej)]),
                };
            }
        }
        Ok(Self {
            grid,
            loc,
            mx,
            my,
            ex,
            ey,
        })
    }

    /// Constant unit coefficient: the negative Dirichlet Laplacian.
    pub fn laplacian(grid: &StaggeredGrid, loc: Location) -> Self {
        Self::new(loc, &Field::constant(grid, Location::Cell, 1.0)).expect("unit coefficient is valid")
    }

    pub fn loc(&self) -> Location {
        self.loc
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.mx * self.my
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, w: &[f64], out: &mut [f64]) {
        let (mx, my) = (self.mx, self.my);
        debug_assert_eq!(w.len(), mx * my);
        debug_assert_eq!(out.len(), mx * my);
        let ihx2 = 1.0 / (self.grid.hx() * self.grid.hx());
        let ihy2 = 1.0 / (self.grid.hy() * self.grid.hy());
        let loc = self.loc;
        for j in 0..my {
            for i in 0..mx {
                let k = j * mx + i;
                if !loc.is_active(mx, my, i, j) {
                    out[k] = 0.0;
                    continue;
                }
                let w0 = w[k];
                let we = neighbour(w, k + 1, loc.is_active(mx, my, i + 1, j), i + 1 < mx, w0);
                let ww = if i > 0 {
                    neighbour(w, k - 1, loc.is_active(mx, my, i - 1, j), true, w0)
                } else {
                    -w0
                };
                let wn = neighbour(w, k + mx, loc.is_active(mx, my, i, j + 1), j + 1 < my, w0);
                let ws = if j > 0 {
                    neighbour(w, k - mx, loc.is_active(mx, my, i, j - 1), true, w0)
                } else {
                    -w0
                };
                let row = j * (mx + 1);
                let xs = self.ex[row + i + 1] * (w0 - we) + self.ex[row + i] * (w0 - ww);
                let ys = self.ey[(j + 1) * mx + i] * (w0 - wn) + self.ey[j * mx + i] * (w0 - ws);
                out[k] = xs * ihx2 + ys * ihy2;
            }
        }
    }

    pub fn apply_field(&self, w: &Field) -> Field {
        debug_assert_eq!(w.loc(), self.loc);
        let mut out = Field::zeros(&self.grid, self.loc);
        self.apply(w.values(), out.values_mut());
        out
    }
}

/// Discrete `-div(c grad w)` for a single component field.
pub fn var_diffusion(w: &Field, c: &Field) -> Result<Field> {
    if w.grid() != c.grid() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", w.grid()),
            found: format!("{:?}", c.grid()),
        });
    }
    Ok(VarDiffusion::new(w.loc(), c)?.apply_field(w))
}

/// Skew-symmetric centred advection `1/2 [(a . grad) w + div(a (x) w)]` of one
/// velocity component by a frozen face field `a`.
///
/// The flux form is assembled from two-point averages and the skew part is
/// obtained by subtracting half the local divergence of the edge fluxes, so
/// `(N w, w) = 0` holds to round-off for any advecting field. When `a` is
/// discretely divergence-free with zero wall-normal entries the correction
/// vanishes.
#[derive(Debug, Clone)]
pub struct Advection {
    grid: StaggeredGrid,
    loc: Location,
    mx: usize,
    my: usize,
    fx: Vec<f64>,
    fy: Vec<f64>,
    half_div: Vec<f64>,
}

impl Advection {
    pub fn new(loc: Location, a: &FaceVectorField) -> Result<Self> {
        let grid = *a.grid();
        let (mx, my) = grid.shape(loc);
        let (nx, ny) = (grid.nx(), grid.ny());
        let (au, av) = (&a.u, &a.v);
        let mut fx = vec![0.0; (mx + 1) * my];
        let mut fy = vec![0.0; mx * (my + 1)];
        match loc {
            Location::U => {
                for j in 0..my {
                    for e in 1..=nx {
                        fx[j * (mx + 1) + e] = 0.5 * (au.get(e - 1, j) + au.get(e, j));
                    }
                }
                // wall edges carry the reflected (zero) average and stay 0
                for e in 1..ny {
                    for i in 1..nx {
                        fy[e * mx + i] = 0.5 * (av.get(i - 1, e) + av.get(i, e));
                    }
                }
            }
            Location::V => {
                for j in 1..ny {
                    for e in 1..nx {
                        fx[j * (mx + 1) + e] = 0.5 * (au.get(e, j - 1) + au.get(e, j));
                    }
                }
                for e in 1..=ny {
                    for i in 0..mx {
                        fy[e * mx + i] = 0.5 * (av.get(i, e - 1) + av.get(i, e));
                    }
                }
            }
            Location::Cell => {
                return Err(Error::WrongLocation {
                    expected: Location::U,
                    found: Location::Cell,
                })
            }
        }
        let (hx, hy) = (grid.hx(), grid.hy());
        let mut half_div = vec![0.0; mx * my];
        for j in 0..my {
            for i in 0..mx {
                let dx = fx[j * (mx + 1) + i + 1] - fx[j * (mx + 1) + i];
                let dy = fy[(j + 1) * mx + i] - fy[j * mx + i];
                half_div[j * mx + i] = 0.5 * (dx / hx + dy / hy);
            }
        }
        Ok(Self {
            grid,
            loc,
            mx,
            my,
            fx,
            fy,
            half_div,
        })
    }

    pub fn loc(&self) -> Location {
        self.loc
    }

    pub fn apply(&self, w: &[f64], out: &mut [f64]) {
        let (mx, my) = (self.mx, self.my);
        let ihx = 0.5 / self.grid.hx();
        let ihy = 0.5 / self.grid.hy();
        let loc = self.loc;
        for j in 0..my {
            for i in 0..mx {
                let k = j * mx + i;
                if !loc.is_active(mx, my, i, j) {
                    out[k] = 0.0;
                    continue;
                }
                let w0 = w[k];
                let we = neighbour(w, k + 1, loc.is_active(mx, my, i + 1, j), i + 1 < mx, w0);
                let ww = if i > 0 {
                    neighbour(w, k - 1, loc.is_active(mx, my, i - 1, j), true, w0)
                } else {
                    -w0
                };
                let wn = neighbour(w, k + mx, loc.is_active(mx, my, i, j + 1), j + 1 < my, w0);
                let ws = if j > 0 {
                    neighbour(w, k - mx, loc.is_active(mx, my, i, j - 1), true, w0)
                } else {
                    -w0
                };
                let row = j * (mx + 1);
                let xf = self.fx[row + i + 1] * (w0 + we) - self.fx[row + i] * (w0 + ww);
                let yf = self.fy[(j + 1) * mx + i] * (w0 + wn) - self.fy[j * mx + i] * (w0 + ws);
                out[k] = xf * ihx + yf * ihy - self.half_div[k] * w0;
            }
        }
    }

    pub fn apply_field(&self, w: &Field) -> Field {
        debug_assert_eq!(w.loc(), self.loc);
        let mut out = Field::zeros(&self.grid, self.loc);
        self.apply(w.values(), out.values_mut());
        out
    }
}

/// Skew-symmetric advection of `w` by `wstar`, both components.
pub fn advect(wstar: &FaceVectorField, w: &FaceVectorField) -> Result<FaceVectorField> {
    wstar.check_compatible(w)?;
    Ok(FaceVectorField {
        u: Advection::new(Location::U, wstar)?.apply_field(&w.u),
        v: Advection::new(Location::V, wstar)?.apply_field(&w.v),
    })
}
