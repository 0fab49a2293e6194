//! Dense direct solutions of the three per-step linear systems, and the
//! unfiltered reference step.
//!
//! These assemble the operators column by column and factorize them, so
//! they share the stencil kernels with the stepper but none of the Krylov
//! machinery.

use crate::error::Result;
use crate::grid::{
    divergence, gradient_p, Advection, FaceVectorField, Field, Location, NeumannPoisson, StaggeredGrid, VarDiffusion,
};
use crate::linsolve::{assemble_dense, dense_solve, restrict, LinearOperator, NullSpace};
use crate::stepper::{momentum_step, projection_step, FlowState, StepperConfig};

fn solve_active<A: LinearOperator>(
    op: &A,
    grid: &StaggeredGrid,
    loc: Location,
    rhs: &Field,
    null: NullSpace,
) -> Result<Field> {
    let n = rhs.values().len();
    let idx = grid.active_indices(loc);
    let m = restrict(&assemble_dense(op, n)?, &idx);
    let b: Vec<f64> = idx.iter().map(|&i| rhs.values()[i]).collect();
    let x = dense_solve(&m, &b, null)?;
    let mut out = Field::zeros(grid, loc);
    for (xi, &i) in x.iter().zip(&idx) {
        out.values_mut()[i] = *xi;
    }
    Ok(out)
}

/// `(I + D_c)^{-1} w` per component.
pub fn dense_filter(w: &FaceVectorField, coeff: &Field) -> Result<FaceVectorField> {
    let grid = *w.grid();
    let mut out = FaceVectorField::zeros(&grid);
    for (loc, wc, oc) in [(Location::U, &w.u, &mut out.u), (Location::V, &w.v, &mut out.v)] {
        let k = VarDiffusion::new(loc, coeff)?;
        let op = |x: &[f64], y: &mut [f64]| {
            k.apply(x, y);
            y.iter_mut().zip(x).for_each(|(a, b)| *a += b);
        };
        *oc = solve_active(&op, &grid, loc, wc, NullSpace::None)?;
    }
    Ok(out)
}

/// The momentum solve of one step from `state`.
pub fn dense_momentum(state: &FlowState, cfg: &StepperConfig) -> Result<FaceVectorField> {
    let grid = *state.grid();
    let f = cfg.forcing.as_ref().map(|f| f(state.t + cfg.dt, &grid));
    let mut out = FaceVectorField::zeros(&grid);
    for (loc, un, oc) in [
        (Location::U, &state.u.u, &mut out.u),
        (Location::V, &state.u.v, &mut out.v),
    ] {
        let adv = Advection::new(loc, &state.w)?;
        let lap = VarDiffusion::laplacian(&grid, loc);
        let n = un.values().len();
        let op = |x: &[f64], y: &mut [f64]| {
            let mut t = vec![0.0; n];
            adv.apply(x, y);
            lap.apply(x, &mut t);
            for k in 0..n {
                y[k] += x[k] / cfg.dt + cfg.nu * t[k];
            }
        };
        let mut rhs = un.map(|x| x / cfg.dt);
        if let Some(f) = &f {
            rhs.axpy(1.0, if loc == Location::U { &f.u } else { &f.v });
        }
        *oc = solve_active(&op, &grid, loc, &rhs, NullSpace::None)?;
    }
    Ok(out)
}

/// Pressure projection: `-div grad p = -div(w~) / dt`, `w = w~ - dt grad p`.
pub fn dense_projection(w_tilde: &FaceVectorField, dt: f64) -> Result<(FaceVectorField, Field)> {
    let grid = *w_tilde.grid();
    let mut rhs = divergence(w_tilde);
    rhs.scale(-1.0 / dt);
    rhs.remove_mean();
    let poisson = NeumannPoisson::new(&grid);
    let op = |x: &[f64], y: &mut [f64]| poisson.apply(x, y);
    let p = solve_active(&op, &grid, Location::Cell, &rhs, NullSpace::Constant)?;
    let mut w = w_tilde.clone();
    w.axpy(-dt, &gradient_p(&p)?);
    Ok((w, p))
}

/// Plain projection step without filtering: momentum then projection, `u = w`.
pub fn chorin_step(state: &FlowState, cfg: &StepperConfig) -> Result<FlowState> {
    let (w_tilde, _) = momentum_step(state, cfg)?;
    let (w, p, _) = projection_step(&w_tilde, Some(&state.p), cfg)?;
    Ok(FlowState {
        t: state.t + cfg.dt,
        step: state.step + 1,
        u: w.clone(),
        w,
        w_tilde,
        p,
    })
}
