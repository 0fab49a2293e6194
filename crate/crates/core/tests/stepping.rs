use nsfilt::filters::{DeltaRule, FilterSpec, IndicatorKind};
use nsfilt::grid::{l2_norm, FaceVectorField, StaggeredGrid};
use nsfilt::stepper::{momentum_step, run, FlowState, StepperConfig};
use nsfilt::verify::{dense_momentum, random_solenoidal, StudyConfig, StudyDelta};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn filter() -> FilterSpec {
    FilterSpec::new(IndicatorKind::Constant, DeltaRule::MeshMultiple(1.0))
}

#[test]
fn momentum_without_advection_is_a_stokes_solve() {
    let g = StaggeredGrid::unit_square(10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = FlowState::new(0.0, random_solenoidal(&g, 3, &mut rng));
    state.w = FaceVectorField::zeros(&g);
    let cfg = StepperConfig::new(0.1, 0.3, filter());
    let (wt, stats) = momentum_step(&state, &cfg).unwrap();
    assert!(stats.converged());
    let dense = dense_momentum(&state, &cfg).unwrap();
    assert!(l2_norm(&wt.sub(&dense)) <= 1e-8 * l2_norm(&dense));
    // a decaying solve never gains energy
    assert!(l2_norm(&wt) < l2_norm(&state.u));
}

#[test]
fn run_is_reproducible_and_dissipative() {
    let g = StaggeredGrid::unit_square(16).unwrap();
    let w0 = random_solenoidal(&g, 4, &mut ChaCha8Rng::seed_from_u64(9));
    let cfg = StepperConfig::new(0.02, 0.01, filter());
    let a = run(&FlowState::new(0.0, w0.clone()), &cfg, 30).unwrap();
    let b = run(&FlowState::new(0.0, w0), &cfg, 30).unwrap();
    assert!(a.ledger.holds());
    assert_eq!(a.reports.len(), 30);
    for (x, y) in a.reports.iter().zip(&b.reports) {
        assert_eq!(x.kinetic_energy.to_bits(), y.kinetic_energy.to_bits());
    }
    for pair in a.reports.windows(2) {
        assert!(pair[1].kinetic_energy <= pair[0].kinetic_energy * (1.0 + 1e-12));
    }
}

#[test]
fn sup_error_shrinks_with_sqrt_dt_radius() {
    let mut study = StudyConfig::standard(filter());
    study.n = 32;
    study.t_final = 0.5;
    study.delta = StudyDelta::SqrtDt(0.1);
    let (coarse, _) = study.run_row(1.0 / 20.0).unwrap();
    let (fine, _) = study.run_row(1.0 / 40.0).unwrap();
    let factor = coarse.sup_eps_tilde / fine.sup_eps_tilde;
    assert!(factor >= 2f64.sqrt() * 0.75, "reduction {factor}");
}
