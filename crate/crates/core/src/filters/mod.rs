//! Indicator functionals, the differential filter and its diagnostics.

mod diagnostics;
mod filter;
mod indicator;

pub use diagnostics::{check_stability_conditions, dissipation_pair, StabilityReport, ADJOINT_RTOL, STABILITY_RTOL};
pub use filter::{apply_filter, apply_g, DeltaRule, FilterSpec, FrozenFilter};
pub use indicator::{eval_indicator, IndicatorKind, DEFAULT_ETA};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, l2_norm, make_grid, FaceVectorField, Location, StaggeredGrid, VarDiffusion};
    use crate::linsolve::{assemble_dense, dense_solve, restrict, NullSpace, SolverConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn noise(g: &StaggeredGrid, seed: u64) -> FaceVectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = FaceVectorField::from_fn(g, |_, _| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        w.enforce_boundary();
        w
    }

    fn constant_spec(c_delta: f64) -> FilterSpec {
        let mut s = FilterSpec::new(IndicatorKind::Constant, DeltaRule::MeshMultiple(c_delta));
        s.solver = SolverConfig::with_tolerance(1e-13);
        s
    }

    #[test]
    fn zero_radius_is_identity() {
        let g = make_grid(8, 6, 1.0, 1.0).unwrap();
        let w = noise(&g, 1);
        let fw = apply_filter(&w, &w, &constant_spec(0.0)).unwrap();
        assert_eq!(fw, w);
        assert_eq!(apply_g(&w, &w, &constant_spec(0.0)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn eigenmode_gain() {
        let n = 16;
        let g = make_grid(n, n, 1.0, 1.0).unwrap();
        let h = g.hx();
        let (k, m) = (3.0, 2.0);
        let lam = 4.0 / (h * h) * ((k * PI * h / 2.0).sin().powi(2) + (m * PI * h / 2.0).sin().powi(2));
        let phi = |x: f64, y: f64| (k * PI * x).sin() * (m * PI * y).sin();
        let w = FaceVectorField::sample_dirichlet(&g, |x, y| (phi(x, y), phi(x, y)));
        let spec = constant_spec(1.0);
        let gain = 1.0 / (1.0 + h * h * lam);
        let fw = apply_filter(&w, &w, &spec).unwrap();
        let gw = apply_g(&w, &w, &spec).unwrap();
        for (a, b) in [(&fw.u, &w.u), (&fw.v, &w.v)] {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - gain * y).abs() < 1e-8);
            }
        }
        for (x, y) in gw.u.values().iter().zip(w.u.values()) {
            assert!((x - (1.0 - gain) * y).abs() < 1e-8);
        }
    }

    #[test]
    fn matches_dense_solve() {
        let g = make_grid(8, 8, 1.0, 1.0).unwrap();
        let w = noise(&g, 7);
        let spec = FilterSpec {
            solver: SolverConfig::with_tolerance(1e-13),
            ..FilterSpec::new(IndicatorKind::Vreman { eta: DEFAULT_ETA }, DeltaRule::MeshMultiple(1.0))
        };
        let coeff = spec.coefficient(&w).unwrap();
        let fw = apply_filter(&w, &w, &spec).unwrap();
        for (loc, wc, fc) in [(Location::U, &w.u, &fw.u), (Location::V, &w.v, &fw.v)] {
            let k = VarDiffusion::new(loc, &coeff).unwrap();
            let op = |x: &[f64], y: &mut [f64]| {
                k.apply(x, y);
                y.iter_mut().zip(x).for_each(|(a, b)| *a += b);
            };
            let idx = g.active_indices(loc);
            let m = restrict(&assemble_dense(&op, wc.values().len()).unwrap(), &idx);
            let b: Vec<f64> = idx.iter().map(|&i| wc.values()[i]).collect();
            let x = dense_solve(&m, &b, NullSpace::None).unwrap();
            for (xi, &i) in x.iter().zip(&idx) {
                assert!((xi - fc.values()[i]).abs() < 1e-8 * (1.0 + xi.abs()));
            }
        }
    }

    #[test]
    fn dissipation_bounds_and_stability() {
        let g = make_grid(16, 16, 1.0, 1.0).unwrap();
        let kinds = [
            IndicatorKind::Constant,
            IndicatorKind::NormalizedGradient { eta: DEFAULT_ETA },
            IndicatorKind::QCriterion { eta: DEFAULT_ETA },
            IndicatorKind::Vreman { eta: DEFAULT_ETA },
        ];
        for (n, kind) in kinds.into_iter().enumerate() {
            let spec = FilterSpec {
                solver: SolverConfig::with_tolerance(1e-13),
                ..FilterSpec::new(kind, DeltaRule::MeshMultiple(1.0))
            };
            for s in 0..5 {
                let w = noise(&g, 100 * n as u64 + s);
                let y = noise(&g, 100 * n as u64 + s + 50);
                let (gww, visc) = dissipation_pair(&w, &w, &spec).unwrap();
                let ww = inner(&w, &w).unwrap();
                assert!(gww >= -1e-10 * ww && gww <= visc + 1e-10 * ww, "{gww} {visc}");
                let rep = check_stability_conditions(&w, &y, &w, &spec, 1.0).unwrap();
                assert!(rep.pass, "{rep:?}");
                let fw = apply_filter(&w, &w, &spec).unwrap();
                assert!(l2_norm(&fw) <= l2_norm(&w));
            }
        }
        let w = FaceVectorField::zeros(&g);
        assert_eq!(dissipation_pair(&w, &w, &constant_spec(1.0)).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn spec_validation() {
        let mut s = constant_spec(1.0);
        s.eps_floor = 1.0;
        assert!(s.validate().is_err());
        let mut s = constant_spec(-1.0);
        assert!(s.validate().is_err());
        s.delta = DeltaRule::MeshMultiple(0.5);
        s.chi0 = -0.1;
        assert!(s.validate().is_err());
    }
}
