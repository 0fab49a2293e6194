//! The nonlinear differential filter `F` and the fluctuation operator `G = I - F`.
//!
//! `F w` solves `(I + D_c) F w = w` componentwise, where `D_c` is the
//! variable-coefficient operator `-div(c grad .)` with Dirichlet data and
//! `c = delta^2 max(a(u), eps)`. The indicator is evaluated once per
//! application and then frozen, so each application is linear in `w`.

use super::indicator::{eval_indicator, IndicatorKind};
use crate::error::{Error, Result};
use crate::grid::{dot, FaceVectorField, Field, Location, StaggeredGrid, VarDiffusion};
use crate::linsolve::{cg_solve, ComponentStats, NullSpace, SolveStats, SolverConfig};

/// Filtering radius: a multiple of the mesh width or an explicit field.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaRule {
    /// `delta = c_delta * min(hx, hy)` everywhere.
    MeshMultiple(f64),
    /// The same radius everywhere.
    Uniform(f64),
    /// Explicit cell-centred radii.
    Field(Field),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub kind: IndicatorKind,
    pub delta: DeltaRule,
    /// Floor `eps` on the indicator; the coefficient is `delta^2 max(a, eps)`.
    pub eps_floor: f64,
    /// Relaxation constant; the stepper uses `chi = chi0 * dt`.
    pub chi0: f64,
    pub solver: SolverConfig,
}

impl FilterSpec {
    pub fn new(kind: IndicatorKind, delta: DeltaRule) -> Self {
        Self {
            kind,
            delta,
            eps_floor: 0.0,
            chi0: 1.0,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        self.solver.validate()?;
        if !(0.0..1.0).contains(&self.eps_floor) {
            return Err(Error::InvalidConfig(format!(
                "eps_floor must lie in [0, 1), got {}",
                self.eps_floor
            )));
        }
        if !(self.chi0 >= 0.0 && self.chi0.is_finite()) {
            return Err(Error::InvalidConfig(format!("chi0 must be >= 0, got {}", self.chi0)));
        }
        match &self.delta {
            DeltaRule::MeshMultiple(c) if !(*c >= 0.0 && c.is_finite()) => {
                Err(Error::InvalidConfig(format!("c_delta must be >= 0, got {c}")))
            }
            DeltaRule::Uniform(d) if !(*d >= 0.0 && d.is_finite()) => {
                Err(Error::InvalidConfig(format!("delta must be >= 0, got {d}")))
            }
            DeltaRule::Field(f) => {
                f.expect_loc(Location::Cell)?;
                if f.values().iter().all(|d| *d >= 0.0 && d.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig("filter radius field must be >= 0".into()))
                }
            }
            _ => Ok(()),
        }
    }

    pub fn delta_field(&self, grid: &StaggeredGrid) -> Result<Field> {
        match &self.delta {
            DeltaRule::MeshMultiple(c) => Ok(Field::constant(grid, Location::Cell, c * grid.h_min())),
            DeltaRule::Uniform(d) => Ok(Field::constant(grid, Location::Cell, *d)),
            DeltaRule::Field(f) => {
                if f.grid() != grid {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{grid:?}"),
                        found: format!("{:?}", f.grid()),
                    });
                }
                Ok(f.clone())
            }
        }
    }

    pub fn delta_max(&self, grid: &StaggeredGrid) -> Result<f64> {
        Ok(self.delta_field(grid)?.max_abs())
    }

    /// Frozen coefficient `delta^2 max(a(u_ind), eps)`.
    pub fn coefficient(&self, u_ind: &FaceVectorField) -> Result<Field> {
        let delta = self.delta_field(u_ind.grid())?;
        let a = eval_indicator(&self.kind, u_ind);
        let mut c = a;
        c.values_mut()
            .iter_mut()
            .zip(delta.values())
            .for_each(|(ai, d)| *ai = d * d * ai.max(self.eps_floor));
        Ok(c)
    }

    pub fn freeze(&self, u_ind: &FaceVectorField) -> Result<FrozenFilter> {
        self.validate()?;
        FrozenFilter::new(self.coefficient(u_ind)?, self.solver)
    }
}

/// The filter with its coefficient fixed.
#[derive(Debug, Clone)]
pub struct FrozenFilter {
    coeff: Field,
    ku: VarDiffusion,
    kv: VarDiffusion,
    solver: SolverConfig,
}

impl FrozenFilter {
    pub fn new(coeff: Field, solver: SolverConfig) -> Result<Self> {
        let ku = VarDiffusion::new(Location::U, &coeff)?;
        let kv = VarDiffusion::new(Location::V, &coeff)?;
        Ok(Self { coeff, ku, kv, solver })
    }

    pub fn coefficient(&self) -> &Field {
        &self.coeff
    }

    fn solve(&self, k: &VarDiffusion, w: &Field) -> (Field, SolveStats) {
        let op = |x: &[f64], y: &mut [f64]| {
            k.apply(x, y);
            y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += xi);
        };
        let mut rhs = w.clone();
        rhs.enforce_boundary();
        let mut x = rhs.clone();
        let stats = cg_solve(&op, rhs.values(), x.values_mut(), &self.solver, NullSpace::None);
        (x, stats)
    }

    /// `F w` together with the solver statistics. Fails if either solve
    /// does not converge.
    pub fn filter(&self, w: &FaceVectorField) -> Result<(FaceVectorField, ComponentStats)> {
        if w.grid() != self.coeff.grid() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.coeff.grid()),
                found: format!("{:?}", w.grid()),
            });
        }
        let ((fu, su), (fv, sv)) = rayon::join(|| self.solve(&self.ku, &w.u), || self.solve(&self.kv, &w.v));
        let stats = ComponentStats { u: su, v: sv }.into_result("cg (filter)")?;
        Ok((FaceVectorField { u: fu, v: fv }, stats))
    }

    /// `G w = w - F w`.
    pub fn fluctuation(&self, w: &FaceVectorField) -> Result<(FaceVectorField, ComponentStats)> {
        let (fw, stats) = self.filter(w)?;
        let mut w0 = w.clone();
        w0.enforce_boundary();
        Ok((w0.sub(&fw), stats))
    }

    /// Eddy-viscosity form `(c grad w, grad w)` with the frozen coefficient.
    pub fn viscous_form(&self, w: &FaceVectorField) -> f64 {
        let area = w.grid().cell_area();
        let mut s = 0.0;
        for (k, c) in [(&self.ku, &w.u), (&self.kv, &w.v)] {
            let mut c = c.clone();
            c.enforce_boundary();
            let kc = k.apply_field(&c);
            s += dot(kc.values(), c.values()) * area;
        }
        s
    }
}

/// `F(u_ind) w`; pass `u_ind = w` for the self-indicated filter.
pub fn apply_filter(w: &FaceVectorField, u_ind: &FaceVectorField, spec: &FilterSpec) -> Result<FaceVectorField> {
    Ok(spec.freeze(u_ind)?.filter(w)?.0)
}

/// `G(u_ind) w = w - F(u_ind) w`.
pub fn apply_g(w: &FaceVectorField, u_ind: &FaceVectorField, spec: &FilterSpec) -> Result<FaceVectorField> {
    Ok(spec.freeze(u_ind)?.fluctuation(w)?.0)
}
