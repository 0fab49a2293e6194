//! Weighted L2 products and the three norms used by the estimates.

use super::stencil::VarDiffusion;
use super::{FaceVectorField, Field};
use crate::error::{Error, Result};
use crate::linsolve::{cg_solve, NullSpace, SolverConfig};

const PAIRWISE_BLOCK: usize = 128;

/// Fixed-order pairwise summation. The reduction tree depends only on the
/// length, so results are bitwise reproducible.
pub(crate) fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= PAIRWISE_BLOCK {
        x.iter().sum()
    } else {
        let mid = x.len() / 2;
        pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
    }
}

/// Euclidean dot product with pairwise summation.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= PAIRWISE_BLOCK {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        let mid = a.len() / 2;
        dot(&a[..mid], &b[..mid]) + dot(&a[mid..], &b[mid..])
    }
}

/// A discrete function made of one or more staggered scalar components.
pub trait Components {
    fn components(&self) -> impl Iterator<Item = &Field>;
}

impl Components for Field {
    fn components(&self) -> impl Iterator<Item = &Field> {
        std::iter::once(self)
    }
}

impl Components for FaceVectorField {
    fn components(&self) -> impl Iterator<Item = &Field> {
        [&self.u, &self.v].into_iter()
    }
}

/// L2 inner product, each stored entry weighted by the cell area.
pub fn inner<T: Components>(f: &T, g: &T) -> Result<f64> {
    let mut s = 0.0;
    for (a, b) in f.components().zip(g.components()) {
        a.check_compatible(b)?;
        s += dot(a.values(), b.values()) * a.grid().cell_area();
    }
    Ok(s)
}

pub fn l2_norm<T: Components>(f: &T) -> f64 {
    f.components()
        .map(|a| dot(a.values(), a.values()) * a.grid().cell_area())
        .sum::<f64>()
        .sqrt()
}

/// Discrete `|grad w|`: `sqrt((-Delta_h w, w))` summed over components.
pub fn h1_seminorm<T: Components>(w: &T) -> f64 {
    w.components()
        .map(|c| {
            let k = VarDiffusion::laplacian(c.grid(), c.loc());
            let kw = k.apply_field(c);
            dot(kw.values(), c.values()) * c.grid().cell_area()
        })
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// Discrete negative norm `sqrt((f, K^{-1} f))` with `K` the Dirichlet
/// Laplacian of each component, inverted by conjugate gradients.
pub fn hneg1_norm<T: Components>(f: &T, cfg: &SolverConfig) -> Result<f64> {
    let mut s = 0.0;
    for c in f.components() {
        if !c.is_finite() {
            return Err(Error::InvalidConfig("hneg1_norm of a non-finite field".into()));
        }
        let k = VarDiffusion::laplacian(c.grid(), c.loc());
        let mut rhs = c.clone();
        rhs.enforce_boundary();
        let mut x = vec![0.0; rhs.values().len()];
        let stats = cg_solve(
            &|p: &[f64], q: &mut [f64]| k.apply(p, q),
            rhs.values(),
            &mut x,
            cfg,
            NullSpace::None,
        );
        if !stats.converged {
            return Err(Error::NotConverged {
                solver: "cg (negative norm)",
                iterations: stats.iterations,
                residual: stats.final_residual,
                target: stats.target,
            });
        }
        s += dot(rhs.values(), &x) * c.grid().cell_area();
    }
    Ok(s.max(0.0).sqrt())
}
