//! Matrix-free Krylov solvers (CG, BiCGStab) and a dense direct oracle.
//!
//! The iterative solvers never report success on the strength of the
//! recursively updated residual alone: whenever a Krylov cycle stops, the
//! true residual `b - A x` is recomputed and the cycle restarts from it if the
//! tolerance is not yet met.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::dot;

/// Largest system `dense_solve` accepts.
pub const DENSE_LIMIT: usize = 4096;

const MAX_RESTARTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Iteration cap; `None` means ten times the number of unknowns.
    pub max_iter: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_iter: None,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerance(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "solver tolerances must be positive (rel_tol = {}, abs_tol = {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn max_iter_for(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * n).max(1)
    }

    /// Residual target `max(rel_tol * |b|, abs_tol)`.
    pub fn target(&self, b_norm: f64) -> f64 {
        (self.rel_tol * b_norm).max(self.abs_tol)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// True (recomputed) residual norm at exit.
    pub final_residual: f64,
    pub target: f64,
    pub converged: bool,
    /// True residual at the start of every Krylov cycle and at exit.
    pub restart_residuals: Vec<f64>,
}

impl SolveStats {
    pub fn into_result(self, solver: &'static str) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                solver,
                iterations: self.iterations,
                residual: self.final_residual,
                target: self.target,
            })
        }
    }
}

/// Statistics of a pair of per-velocity-component solves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub u: SolveStats,
    pub v: SolveStats,
}

impl ComponentStats {
    pub fn iterations(&self) -> usize {
        self.u.iterations + self.v.iterations
    }

    pub fn converged(&self) -> bool {
        self.u.converged && self.v.converged
    }

    /// The first non-converged solve as an error.
    pub fn into_result(self, solver: &'static str) -> Result<Self> {
        if !self.u.converged {
            self.u.clone().into_result(solver)?;
        }
        if !self.v.converged {
            self.v.clone().into_result(solver)?;
        }
        Ok(self)
    }
}

/// Null space the solver has to respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullSpace {
    None,
    /// Constant vectors (pure Neumann problems). The right-hand side and the
    /// iterate are kept mean-free.
    Constant,
}

pub trait LinearOperator {
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for F {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self(x, y)
    }
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

fn residual<A: LinearOperator + ?Sized>(a: &A, b: &[f64], x: &[f64], r: &mut [f64], null: NullSpace) -> f64 {
    a.apply(x, r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    if null == NullSpace::Constant {
        remove_mean(r);
    }
    norm(r)
}

/// Runs Krylov cycles from the true residual until it meets the target, the
/// iteration cap is hit, or restarts stop paying off.
fn restarted<A, C>(a: &A, b: &[f64], x: &mut [f64], cfg: &SolverConfig, null: NullSpace, mut cycle: C) -> SolveStats
where
    A: LinearOperator + ?Sized,
    C: FnMut(&mut [f64], &mut Vec<f64>, f64, usize) -> usize,
{
    let n = b.len();
    assert_eq!(x.len(), n, "solution and right-hand side lengths differ");
    let mut rhs = b.to_vec();
    if null == NullSpace::Constant {
        remove_mean(&mut rhs);
        remove_mean(x);
    }
    let target = cfg.target(norm(&rhs));
    let max_iter = cfg.max_iter_for(n);
    let mut r = vec![0.0; n];
    let mut rnorm = residual(a, &rhs, x, &mut r, null);
    let mut history = vec![rnorm];
    let mut iterations = 0;
    for _ in 0..MAX_RESTARTS {
        if rnorm <= target || iterations >= max_iter {
            break;
        }
        let used = cycle(x, &mut r, target, max_iter - iterations);
        iterations += used;
        if null == NullSpace::Constant {
            remove_mean(x);
        }
        let prev = rnorm;
        rnorm = residual(a, &rhs, x, &mut r, null);
        history.push(rnorm);
        if used == 0 || (rnorm > target && rnorm >= prev) {
            // stagnation: the recursion cannot make further progress
            break;
        }
    }
    SolveStats {
        iterations,
        final_residual: rnorm,
        target,
        converged: rnorm <= target,
        restart_residuals: history,
    }
}

/// Conjugate gradients for symmetric positive (semi)definite operators.
///
/// `x` holds the initial guess on entry and the solution on exit.
/// Non-convergence is reported through `SolveStats::converged`.
pub fn cg_solve<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x: &mut [f64],
    cfg: &SolverConfig,
    null: NullSpace,
) -> SolveStats {
    let n = b.len();
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    restarted(a, b, x, cfg, null, |x, r, target, budget| {
        p.copy_from_slice(r);
        let mut rr = dot(r, r);
        let mut it = 0;
        while it < budget {
            a.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rr / pap;
            x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
            if null == NullSpace::Constant {
                remove_mean(r);
            }
            it += 1;
            let rr_new = dot(r, r);
            if rr_new.sqrt() <= target {
                break;
            }
            let beta = rr_new / rr;
            p.iter_mut().zip(r.iter()).for_each(|(pi, ri)| *pi = ri + beta * *pi);
            rr = rr_new;
        }
        it
    })
}

/// BiCGStab for general nonsymmetric operators.
pub fn bicgstab_solve<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x: &mut [f64],
    cfg: &SolverConfig,
    null: NullSpace,
) -> SolveStats {
    let n = b.len();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    restarted(a, b, x, cfg, null, |x, r, target, budget| {
        let r_hat = r.to_vec();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        p.fill(0.0);
        v.fill(0.0);
        let mut it = 0;
        while it < budget {
            let rho_new = dot(&r_hat, r);
            if rho_new == 0.0 || !rho_new.is_finite() {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            for k in 0..n {
                p[k] = r[k] + beta * (p[k] - omega * v[k]);
            }
            a.apply(&p, &mut v);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 || !rv.is_finite() {
                break;
            }
            alpha = rho_new / rv;
            for k in 0..n {
                s[k] = r[k] - alpha * v[k];
            }
            it += 1;
            if norm(&s) <= target {
                x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
                r.copy_from_slice(&s);
                break;
            }
            a.apply(&s, &mut t);
            let tt = dot(&t, &t);
            if tt == 0.0 {
                x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
                r.copy_from_slice(&s);
                break;
            }
            omega = dot(&t, &s) / tt;
            for k in 0..n {
                x[k] += alpha * p[k] + omega * s[k];
                r[k] = s[k] - omega * t[k];
            }
            if null == NullSpace::Constant {
                remove_mean(r);
            }
            rho = rho_new;
            if norm(r) <= target || omega == 0.0 {
                break;
            }
        }
        it
    })
}

/// Assembles the explicit matrix of `a` by applying it to unit vectors.
pub fn assemble_dense<A: LinearOperator + ?Sized>(a: &A, n: usize) -> Result<DMatrix<f64>> {
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge(n));
    }
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        a.apply(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    Ok(m)
}

/// Submatrix on the given row/column indices (the genuine unknowns).
pub fn restrict(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Direct LU solve. For `NullSpace::Constant` the right-hand side must have
/// zero mean and the mean-free solution is returned.
pub fn dense_solve(m: &DMatrix<f64>, b: &[f64], null: NullSpace) -> Result<Vec<f64>> {
    let n = b.len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge(n));
    }
    assert_eq!(m.nrows(), n);
    match null {
        NullSpace::None => {
            let rhs = DVector::from_column_slice(b);
            let lu = m.clone().lu();
            let pivots = lu.u().diagonal().map(f64::abs);
            let well_posed = pivots.min() > 1e-13 * pivots.max();
            match lu.solve(&rhs) {
                Some(x) if well_posed && x.iter().all(|v| v.is_finite()) => Ok(x.iter().copied().collect()),
                _ => {
                    let scale = m.amax().max(f64::MIN_POSITIVE);
                    let rank = m.clone().svd(false, false).rank(1e-12 * scale * n as f64);
                    Err(Error::Singular { null_dim: n - rank })
                }
            }
        }
        NullSpace::Constant => {
            let mean = b.iter().sum::<f64>() / n as f64;
            let scale = b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if mean.abs() > 1e-12 * scale {
                return Err(Error::Compatibility { mean });
            }
            // bordered system [A 1; 1^T 0] [x; l] = [b; 0]
            let mut aug = DMatrix::zeros(n + 1, n + 1);
            aug.view_mut((0, 0), (n, n)).copy_from(m);
            for i in 0..n {
                aug[(i, n)] = 1.0;
                aug[(n, i)] = 1.0;
            }
            let mut rhs = DVector::zeros(n + 1);
            rhs.rows_mut(0, n).copy_from_slice(b);
            let x = aug.lu().solve(&rhs).ok_or(Error::Singular { null_dim: 2 })?;
            Ok(x.rows(0, n).iter().copied().collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Field, Location, NeumannPoisson, VarDiffusion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let b = random_vec(50, 1);
        let id = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        let mut x = vec![0.0; 50];
        let st = cg_solve(&id, &b, &mut x, &SolverConfig::default(), NullSpace::None);
        assert!(st.converged);
        assert_eq!(st.iterations, 1);
        assert_eq!(x, b);
        let mut x = vec![0.0; 50];
        let st = bicgstab_solve(&id, &b, &mut x, &SolverConfig::default(), NullSpace::None);
        assert!(st.converged);
        for (a, c) in x.iter().zip(&b) {
            assert!((a - c).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let g = make_grid(6, 6, 1.0, 1.0).unwrap();
        let k = VarDiffusion::laplacian(&g, Location::Cell);
        let b = vec![0.0; 36];
        let mut x = vec![0.0; 36];
        let st = cg_solve(
            &|p: &[f64], q: &mut [f64]| k.apply(p, q),
            &b,
            &mut x,
            &SolverConfig::default(),
            NullSpace::None,
        );
        assert!(st.converged && x.iter().all(|&v| v == 0.0));
        let st = bicgstab_solve(
            &|p: &[f64], q: &mut [f64]| k.apply(p, q),
            &b,
            &mut x,
            &SolverConfig::default(),
            NullSpace::None,
        );
        assert!(st.converged && x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cg_matches_dense_on_shifted_laplacian() {
        let g = make_grid(8, 8, 1.0, 1.0).unwrap();
        let k = VarDiffusion::laplacian(&g, Location::Cell);
        let op = |p: &[f64], q: &mut [f64]| {
            k.apply(p, q);
            q.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        };
        let b = random_vec(64, 7);
        let mut x = vec![0.0; 64];
        let st = cg_solve(&op, &b, &mut x, &SolverConfig::default(), NullSpace::None);
        assert!(st.converged);
        let m = assemble_dense(&op, 64).unwrap();
        let xd = dense_solve(&m, &b, NullSpace::None).unwrap();
        let err = x.iter().zip(&xd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-8 * norm(&xd));
        // restart history of an SPD solve never increases
        assert!(st.restart_residuals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn true_residual_meets_contract() {
        let g = make_grid(16, 16, 1.0, 1.0).unwrap();
        let k = VarDiffusion::laplacian(&g, Location::V);
        let op = |p: &[f64], q: &mut [f64]| k.apply(p, q);
        let mut b = Field::zeros(&g, Location::V);
        let n = b.values().len();
        b.values_mut().copy_from_slice(&random_vec(n, 11));
        b.enforce_boundary();
        let cfg = SolverConfig::with_tolerance(1e-11);
        let mut x = vec![0.0; b.values().len()];
        let st = cg_solve(&op, b.values(), &mut x, &cfg, NullSpace::None);
        assert!(st.converged);
        let mut r = vec![0.0; x.len()];
        let rn = residual(&op, b.values(), &x, &mut r, NullSpace::None);
        assert!(rn <= cfg.target(norm(b.values())));
    }

    #[test]
    fn neumann_poisson_with_projection() {
        let g = make_grid(8, 8, 1.0, 1.0).unwrap();
        let lap = NeumannPoisson::new(&g);
        let op = |p: &[f64], q: &mut [f64]| lap.apply(p, q);
        let mut b = random_vec(64, 5);
        remove_mean(&mut b);
        let mut x = vec![0.0; 64];
        let st = cg_solve(&op, &b, &mut x, &SolverConfig::default(), NullSpace::Constant);
        assert!(st.converged);
        let m = assemble_dense(&op, 64).unwrap();
        let xd = dense_solve(&m, &b, NullSpace::Constant).unwrap();
        let err = x.iter().zip(&xd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-8 * norm(&xd));
        assert!(xd.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn dense_basics_and_errors() {
        let m = DMatrix::from_element(1, 1, 2.0);
        assert_eq!(dense_solve(&m, &[4.0], NullSpace::None).unwrap(), vec![2.0]);

        let g = make_grid(4, 4, 1.0, 1.0).unwrap();
        let lap = NeumannPoisson::new(&g);
        let m = assemble_dense(&|p: &[f64], q: &mut [f64]| lap.apply(p, q), 16).unwrap();
        match dense_solve(&m, &[1.0; 16], NullSpace::None) {
            Err(Error::Singular { null_dim }) => assert_eq!(null_dim, 1),
            other => panic!("expected singular, got {other:?}"),
        }
        assert!(matches!(
            dense_solve(&m, &[1.0; 16], NullSpace::Constant),
            Err(Error::Compatibility { .. })
        ));
        assert!(matches!(
            assemble_dense(&|p: &[f64], q: &mut [f64]| q.copy_from_slice(p), 5000),
            Err(Error::TooLarge(5000))
        ));
    }

    #[test]
    fn bicgstab_on_nonsymmetric_system() {
        // convection-diffusion type 1D operator
        let n = 40;
        let op = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 3.0 * x[i] - 1.4 * l - 0.6 * r;
            }
        };
        let b = random_vec(n, 2);
        let mut x = vec![0.0; n];
        let st = bicgstab_solve(&op, &b, &mut x, &SolverConfig::default(), NullSpace::None);
        assert!(st.converged);
        let xd = dense_solve(&assemble_dense(&op, n).unwrap(), &b, NullSpace::None).unwrap();
        let err = x.iter().zip(&xd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-8 * norm(&xd));
    }

    #[test]
    fn non_convergence_is_flagged() {
        let g = make_grid(16, 16, 1.0, 1.0).unwrap();
        let k = VarDiffusion::laplacian(&g, Location::Cell);
        let b = random_vec(256, 3);
        let mut x = vec![0.0; 256];
        let cfg = SolverConfig {
            max_iter: Some(3),
            ..SolverConfig::default()
        };
        let st = cg_solve(
            &|p: &[f64], q: &mut [f64]| k.apply(p, q),
            &b,
            &mut x,
            &cfg,
            NullSpace::None,
        );
        assert!(!st.converged);
        assert_eq!(st.iterations, 3);
        assert!(st.into_result("cg").is_err());
    }
}
