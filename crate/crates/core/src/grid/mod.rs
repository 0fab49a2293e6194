//! MAC staggered grid geometry and the discrete fields that live on it.
//!
//! Horizontal velocity `u` sits on vertical faces, vertical velocity `v` on
//! horizontal faces and scalars (pressure, indicators, filter coefficients) at
//! cell centers. Storage is row-major with `i` (the x index) fastest.
//!
//! Face fields keep the wall-normal entries (`u` on `x = 0, lx`, `v` on
//! `y = 0, ly`) in storage. They are not unknowns: every operator treats them
//! as zero on input and writes zero to them on output.

mod norms;
mod ops;
pub mod snapshot;
mod stencil;

use serde::{Deserialize, Serialize};

pub use norms::{dot, h1_seminorm, hneg1_norm, inner, l2_norm, Components};
pub use ops::{divergence, grad_tensor, gradient_p, NeumannPoisson};
pub use stencil::{advect, var_diffusion, Advection, VarDiffusion};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaggeredGrid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

/// Builds a grid of `nx` by `ny` cells on `[0, lx] x [0, ly]`.
pub fn make_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<StaggeredGrid> {
    StaggeredGrid::new(nx, ny, lx, ly)
}

impl StaggeredGrid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells per direction, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "domain lengths must be positive and finite, got {lx}x{ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    /// Unit square with `n x n` cells.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// The smaller of the two mesh widths.
    pub fn h_min(&self) -> f64 {
        self.hx.min(self.hy)
    }

    /// Quadrature weight of every stored entry.
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Storage shape `(mx, my)` of a field at `loc`.
    pub fn shape(&self, loc: Location) -> (usize, usize) {
        match loc {
            Location::U => (self.nx + 1, self.ny),
            Location::V => (self.nx, self.ny + 1),
            Location::Cell => (self.nx, self.ny),
        }
    }

    /// Physical coordinates of entry `(i, j)` of a field at `loc`.
    pub fn position(&self, loc: Location, i: usize, j: usize) -> (f64, f64) {
        let (i, j) = (i as f64, j as f64);
        match loc {
            Location::U => (i * self.hx, (j + 0.5) * self.hy),
            Location::V => ((i + 0.5) * self.hx, j * self.hy),
            Location::Cell => ((i + 0.5) * self.hx, (j + 0.5) * self.hy),
        }
    }

    /// Number of genuine unknowns (excludes wall-normal face entries).
    pub fn unknowns(&self, loc: Location) -> usize {
        match loc {
            Location::U => (self.nx - 1) * self.ny,
            Location::V => self.nx * (self.ny - 1),
            Location::Cell => self.nx * self.ny,
        }
    }

    /// Storage indices of the genuine unknowns at `loc`, in storage order.
    pub fn active_indices(&self, loc: Location) -> Vec<usize> {
        let (mx, my) = self.shape(loc);
        (0..my)
            .flat_map(|j| (0..mx).map(move |i| (i, j)))
            .filter(|&(i, j)| loc.is_active(mx, my, i, j))
            .map(|(i, j)| j * mx + i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    /// Vertical faces, horizontal velocity.
    U,
    /// Horizontal faces, vertical velocity.
    V,
    /// Cell centers.
    Cell,
}

impl Location {
    /// Tag used in snapshot headers.
    pub fn tag(self) -> &'static str {
        match self {
            Location::U => "u",
            Location::V => "v",
            Location::Cell => "p",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "u" => Some(Location::U),
            "v" => Some(Location::V),
            "p" => Some(Location::Cell),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn is_active(self, mx: usize, my: usize, i: usize, j: usize) -> bool {
        match self {
            Location::U => i > 0 && i + 1 < mx,
            Location::V => j > 0 && j + 1 < my,
            Location::Cell => true,
        }
    }
}

/// A scalar grid function at one staggered location.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: StaggeredGrid,
    loc: Location,
    values: Vec<f64>,
}

/// Cell-centered scalar: pressure, indicator values, filter coefficients.
pub type CellScalarField = Field;

impl Field {
    pub fn zeros(grid: &StaggeredGrid, loc: Location) -> Self {
        let (mx, my) = grid.shape(loc);
        Self {
            grid: *grid,
            loc,
            values: vec![0.0; mx * my],
        }
    }

    pub fn constant(grid: &StaggeredGrid, loc: Location, value: f64) -> Self {
        let mut f = Self::zeros(grid, loc);
        f.values.fill(value);
        f
    }

    /// Samples `f(x, y)` at every stored entry, including wall-normal faces.
    pub fn from_fn(grid: &StaggeredGrid, loc: Location, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let (mx, my) = grid.shape(loc);
        let mut values = Vec::with_capacity(mx * my);
        for j in 0..my {
            for i in 0..mx {
                let (x, y) = grid.position(loc, i, j);
                values.push(f(x, y));
            }
        }
        Self {
            grid: *grid,
            loc,
            values,
        }
    }

    pub fn from_values(grid: &StaggeredGrid, loc: Location, values: Vec<f64>) -> Result<Self> {
        let (mx, my) = grid.shape(loc);
        if values.len() != mx * my {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", mx * my),
                found: format!("{} values", values.len()),
            });
        }
        Ok(Self {
            grid: *grid,
            loc,
            values,
        })
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }
    pub fn loc(&self) -> Location {
        self.loc
    }
    pub fn shape(&self) -> (usize, usize) {
        self.grid.shape(self.loc)
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.shape().0 + i
    }
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.idx(i, j)]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.idx(i, j);
        self.values[k] = value;
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        let (mx, my) = self.shape();
        self.loc.is_active(mx, my, i, j)
    }

    /// Zeroes the wall-normal entries of a face field; no-op for cells.
    pub fn enforce_boundary(&mut self) {
        let (mx, my) = self.shape();
        match self.loc {
            Location::U => {
                for j in 0..my {
                    self.values[j * mx] = 0.0;
                    self.values[j * mx + mx - 1] = 0.0;
                }
            }
            Location::V => {
                self.values[..mx].fill(0.0);
                let last = (my - 1) * mx;
                self.values[last..].fill(0.0);
            }
            Location::Cell => {}
        }
    }

    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.loc != other.loc {
            return Err(Error::WrongLocation {
                expected: self.loc,
                found: other.loc,
            });
        }
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.grid),
                found: format!("{:?}", other.grid),
            });
        }
        Ok(())
    }

    pub(crate) fn expect_loc(&self, loc: Location) -> Result<()> {
        if self.loc == loc {
            Ok(())
        } else {
            Err(Error::WrongLocation {
                expected: loc,
                found: self.loc,
            })
        }
    }

    /// Arithmetic mean over all stored entries.
    pub fn mean(&self) -> f64 {
        norms::pairwise_sum(&self.values) / self.values.len() as f64
    }

    pub fn remove_mean(&mut self) {
        let m = self.mean();
        self.values.iter_mut().for_each(|x| *x -= m);
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|x| *x *= a);
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Field) {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values.iter_mut().zip(&other.values).for_each(|(x, y)| *x += a * y);
    }

    /// `self - other`
    pub fn sub(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            loc: self.loc,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Discrete velocity: `u` on vertical faces, `v` on horizontal faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVectorField {
    pub u: Field,
    pub v: Field,
}

impl FaceVectorField {
    pub fn zeros(grid: &StaggeredGrid) -> Self {
        Self {
            u: Field::zeros(grid, Location::U),
            v: Field::zeros(grid, Location::V),
        }
    }

    /// Samples a vector function at the face midpoints, wall-normal entries included.
    pub fn from_fn(grid: &StaggeredGrid, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let u = Field::from_fn(grid, Location::U, |x, y| f(x, y).0);
        let v = Field::from_fn(grid, Location::V, |x, y| f(x, y).1);
        Self { u, v }
    }

    /// Samples and then zeroes the wall-normal entries.
    pub fn sample_dirichlet(grid: &StaggeredGrid, f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let mut w = Self::from_fn(grid, f);
        w.enforce_boundary();
        w
    }

    pub fn grid(&self) -> &StaggeredGrid {
        self.u.grid()
    }

    pub fn enforce_boundary(&mut self) {
        self.u.enforce_boundary();
        self.v.enforce_boundary();
    }

    pub fn scale(&mut self, a: f64) {
        self.u.scale(a);
        self.v.scale(a);
    }

    pub fn axpy(&mut self, a: f64, other: &FaceVectorField) {
        self.u.axpy(a, &other.u);
        self.v.axpy(a, &other.v);
    }

    pub fn sub(&self, other: &FaceVectorField) -> FaceVectorField {
        FaceVectorField {
            u: self.u.sub(&other.u),
            v: self.v.sub(&other.v),
        }
    }

    /// `a * self + b * other`
    pub fn lincomb(&self, a: f64, b: f64, other: &FaceVectorField) -> FaceVectorField {
        let comb = |x: &Field, y: &Field| {
            let mut out = x.clone();
            out.values_mut()
                .iter_mut()
                .zip(y.values())
                .for_each(|(p, q)| *p = a * *p + b * q);
            out
        };
        FaceVectorField {
            u: comb(&self.u, &other.u),
            v: comb(&self.v, &other.v),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.max_abs().max(self.v.max_abs())
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn check_compatible(&self, other: &FaceVectorField) -> Result<()> {
        self.u.check_compatible(&other.u)?;
        self.v.check_compatible(&other.v)
    }
}

/// Velocity gradient at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTensorField {
    pub dudx: Field,
    pub dudy: Field,
    pub dvdx: Field,
    pub dvdy: Field,
}

impl CellTensorField {
    /// `[du/dx, du/dy, dv/dx, dv/dy]` at cell `k` (storage index).
    #[inline]
    pub fn at(&self, k: usize) -> [f64; 4] {
        [
            self.dudx.values()[k],
            self.dudy.values()[k],
            self.dvdx.values()[k],
            self.dvdy.values()[k],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.dudx.is_finite() && self.dudy.is_finite() && self.dvdx.is_finite() && self.dvdy.is_finite()
    }
}
