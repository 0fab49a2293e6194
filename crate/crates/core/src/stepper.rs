//! Filter-stabilized projection time stepping.
//!
//! One step (filter after projection):
//!
//! 1. momentum: `(w~ - u^n)/dt + (w^n . grad) w~ - nu Lap w~ = f(t_{n+1})`
//! 2. projection: `w = w~ - dt grad p`, `div w = 0`
//! 3. filter: `wbar = F(w) w`
//! 4. relax: `u = (1 - chi) w + chi wbar`, optionally re-projected
//!
//! With filtering before projection steps 3-4 act on `w~` and the
//! projection comes last.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterSpec;
use crate::grid::{
    divergence, dot, gradient_p, h1_seminorm, hneg1_norm, inner, l2_norm, Advection, FaceVectorField, Field, Location,
    NeumannPoisson, StaggeredGrid, VarDiffusion,
};
use crate::linsolve::{bicgstab_solve, cg_solve, ComponentStats, NullSpace, SolveStats, SolverConfig};

/// Discrete solution at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub step: usize,
    /// Relaxed velocity `u^n`.
    pub u: FaceVectorField,
    /// Projected velocity `w^n`.
    pub w: FaceVectorField,
    /// Momentum-step velocity `w~^n`.
    pub w_tilde: FaceVectorField,
    /// Mean-free pressure `p^n`.
    pub p: Field,
}

impl FlowState {
    /// `u^0 = w^0 = w~^0 = u0`, zero pressure.
    pub fn new(t: f64, mut u0: FaceVectorField) -> Self {
        u0.enforce_boundary();
        let p = Field::zeros(u0.grid(), Location::Cell);
        Self {
            t,
            step: 0,
            u: u0.clone(),
            w: u0.clone(),
            w_tilde: u0,
            p,
        }
    }

    pub fn grid(&self) -> &StaggeredGrid {
        self.u.grid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// momentum, projection, filter, relax, optional re-projection.
    AfterProjection { reproject: bool },
    /// momentum, filter, relax, projection.
    BeforeProjection,
}

impl Default for FilterMode {
    fn default() -> Self {
        FilterMode::AfterProjection { reproject: true }
    }
}

/// What `run` does when the energy bound is exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityCheck {
    /// Skip the bound (and the negative-norm solves it needs).
    Off,
    #[default]
    Warn,
    Abort,
}

/// Body force `f(t)` sampled on the faces.
pub type Forcing = Arc<dyn Fn(f64, &StaggeredGrid) -> FaceVectorField + Send + Sync>;

#[derive(Clone)]
pub struct StepperConfig {
    pub dt: f64,
    pub nu: f64,
    pub filter: FilterSpec,
    pub mode: FilterMode,
    /// `None` means `f = 0`.
    pub forcing: Option<Forcing>,
    pub momentum_solver: SolverConfig,
    pub poisson_solver: SolverConfig,
    pub stability: StabilityCheck,
}

impl fmt::Debug for StepperConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StepperConfig")
            .field("dt", &self.dt)
            .field("nu", &self.nu)
            .field("filter", &self.filter)
            .field("mode", &self.mode)
            .field("forcing", &self.forcing.as_ref().map(|_| "<fn>"))
            .field("momentum_solver", &self.momentum_solver)
            .field("poisson_solver", &self.poisson_solver)
            .field("stability", &self.stability)
            .finish()
    }
}

impl StepperConfig {
    pub fn new(dt: f64, nu: f64, filter: FilterSpec) -> Self {
        Self {
            dt,
            nu,
            filter,
            mode: FilterMode::default(),
            forcing: None,
            momentum_solver: SolverConfig::default(),
            poisson_solver: SolverConfig::default(),
            stability: StabilityCheck::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidConfig(format!("nu must be positive, got {}", self.nu)));
        }
        self.filter.validate()?;
        self.momentum_solver.validate()?;
        self.poisson_solver.validate()
    }

    /// Relaxation weight `chi0 * dt`, clamped to `[0, 1]`.
    pub fn chi(&self) -> f64 {
        let chi = self.filter.chi0 * self.dt;
        if chi > 1.0 {
            log::warn!("chi0 * dt = {chi} exceeds 1; clamping the relaxation weight to 1");
            1.0
        } else {
            chi.max(0.0)
        }
    }

    fn forcing_at(&self, t: f64, grid: &StaggeredGrid) -> Option<FaceVectorField> {
        self.forcing.as_ref().map(|f| {
            let mut fv = f(t, grid);
            fv.enforce_boundary();
            fv
        })
    }
}

/// Per-step energy budget and solver effort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t: f64,
    /// `1/2 |w|^2`.
    pub kinetic_energy: f64,
    /// `nu dt |grad w~|^2`.
    pub viscous_dissipation: f64,
    /// `chi0 dt (G w, w)` for the field filtered in this step.
    pub model_dissipation_increment: f64,
    pub norm_u: f64,
    pub norm_w: f64,
    pub norm_wtilde: f64,
    /// `|w - P_in|` where `P_in` is the projection input (`w~`, or the relaxed
    /// field when filtering precedes projection), and `|w~ - u^{n-1}|`: the
    /// dissipated increments of the energy bound.
    pub projection_defect: f64,
    pub norm_wtilde_minus_uprev: f64,
    /// Euclidean norm of the cell divergence of `w`, and what the Poisson
    /// tolerance guarantees for it.
    pub div_residual: f64,
    pub div_tolerance: f64,
    pub iters_momentum: usize,
    pub iters_poisson: usize,
    pub iters_filter: usize,
}

impl StepReport {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.kinetic_energy,
            self.viscous_dissipation,
            self.model_dissipation_increment,
            self.norm_u,
            self.norm_w,
            self.norm_wtilde,
            self.div_residual,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

pub const REPORT_CSV_HEADER: &str =
    "t,ke,visc_diss,model_diss_inc,norm_u,norm_w,div_res,iters_momentum,iters_poisson,iters_filter";

pub fn write_reports_csv<W: Write>(reports: &[StepReport], mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for r in reports {
        writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{}",
            r.t,
            r.kinetic_energy,
            r.viscous_dissipation,
            r.model_dissipation_increment,
            r.norm_u,
            r.norm_w,
            r.div_residual,
            r.iters_momentum,
            r.iters_poisson,
            r.iters_filter
        )?;
    }
    Ok(())
}

/// Momentum solve at `t + dt` with advecting field `w^n`. Returns `w~`.
pub fn momentum_step(state: &FlowState, cfg: &StepperConfig) -> Result<(FaceVectorField, ComponentStats)> {
    let grid = *state.grid();
    let t_next = state.t + cfg.dt;
    let f = cfg.forcing_at(t_next, &grid);
    let solve = |loc: Location, un: &Field, fc: Option<&Field>| -> Result<(Field, SolveStats)> {
        let adv = Advection::new(loc, &state.w)?;
        let lap = VarDiffusion::laplacian(&grid, loc);
        let (idt, nu) = (1.0 / cfg.dt, cfg.nu);
        let n = un.values().len();
        let op = move |x: &[f64], y: &mut [f64]| {
            let mut tmp = vec![0.0; n];
            adv.apply(x, y);
            lap.apply(x, &mut tmp);
            for k in 0..n {
                y[k] += idt * x[k] + nu * tmp[k];
            }
        };
        let mut rhs = un.map(|x| x * idt);
        if let Some(fc) = fc {
            rhs.axpy(1.0, fc);
        }
        rhs.enforce_boundary();
        let mut x = un.clone();
        x.enforce_boundary();
        let stats = bicgstab_solve(&op, rhs.values(), x.values_mut(), &cfg.momentum_solver, NullSpace::None);
        Ok((x, stats))
    };
    let (ru, rv) = rayon::join(
        || solve(Location::U, &state.u.u, f.as_ref().map(|f| &f.u)),
        || solve(Location::V, &state.u.v, f.as_ref().map(|f| &f.v)),
    );
    let ((wu, su), (wv, sv)) = (ru?, rv?);
    let stats = ComponentStats { u: su, v: sv }.into_result("bicgstab (momentum)")?;
    Ok((FaceVectorField { u: wu, v: wv }, stats))
}

/// Result of an L2 projection onto discretely divergence-free fields.
#[derive(Debug, Clone)]
pub struct Projection {
    pub w: FaceVectorField,
    /// The scalar `phi` with `w = w_in - grad phi`, mean-free.
    pub phi: Field,
    pub stats: SolveStats,
    pub div_residual: f64,
    pub div_tolerance: f64,
}

/// Projects `w_in` with a Neumann Poisson solve for `phi`, `-div grad phi = -div w_in`.
pub fn project(w_in: &FaceVectorField, guess: Option<&Field>, cfg: &SolverConfig) -> Result<Projection> {
    let grid = *w_in.grid();
    let mut w_in = w_in.clone();
    w_in.enforce_boundary();
    let mut rhs = divergence(&w_in);
    rhs.scale(-1.0);
    let poisson = NeumannPoisson::new(&grid);
    let mut phi = match guess {
        Some(g) => g.clone(),
        None => Field::zeros(&grid, Location::Cell),
    };
    let stats = cg_solve(
        &|x: &[f64], y: &mut [f64]| poisson.apply(x, y),
        rhs.values(),
        phi.values_mut(),
        cfg,
        NullSpace::Constant,
    )
    .into_result("cg (pressure)")?;
    phi.remove_mean();
    let mut w = w_in.clone();
    w.axpy(-1.0, &gradient_p(&phi)?);
    let div = divergence(&w);
    let div_residual = dot(div.values(), div.values()).sqrt();
    // solver tolerance plus the rounding of one divergence evaluation
    let n = (grid.nx() * grid.ny()) as f64;
    let roundoff = 64.0 * f64::EPSILON * n.sqrt() * w_in.max_abs() / grid.h_min();
    let div_tolerance = stats.target + roundoff;
    Ok(Projection {
        w,
        phi,
        stats,
        div_residual,
        div_tolerance,
    })
}

/// Pressure projection of `w~`: returns `w^{n+1}`, the mean-free `p^{n+1}`
/// and the solve record.
pub fn projection_step(
    w_tilde: &FaceVectorField,
    p_prev: Option<&Field>,
    cfg: &StepperConfig,
) -> Result<(FaceVectorField, Field, Projection)> {
    let guess = p_prev.map(|p| p.map(|x| x * cfg.dt));
    let proj = project(w_tilde, guess.as_ref(), &cfg.poisson_solver)?;
    let p = proj.phi.map(|x| x / cfg.dt);
    Ok((proj.w.clone(), p, proj))
}

/// Output of the filter and relaxation stage.
#[derive(Debug, Clone)]
pub struct Relaxed {
    pub u: FaceVectorField,
    /// `(G w, w)` with the coefficient frozen at `w`.
    pub g_ww: f64,
    pub filter_stats: ComponentStats,
    pub reprojection: Option<Projection>,
}

/// `u = (1 - chi) w + chi F(w) w`, re-projected if requested.
pub fn filter_relax_step(w: &FaceVectorField, cfg: &StepperConfig, reproject: bool) -> Result<Relaxed> {
    let chi = cfg.chi();
    if chi == 0.0 {
        return Ok(Relaxed {
            u: w.clone(),
            g_ww: 0.0,
            filter_stats: ComponentStats::default(),
            reprojection: None,
        });
    }
    let frozen = cfg.filter.freeze(w)?;
    let (wbar, filter_stats) = frozen.filter(w)?;
    let mut w0 = w.clone();
    w0.enforce_boundary();
    let g_ww = inner(&w0.sub(&wbar), &w0)?;
    let u = w0.lincomb(1.0 - chi, chi, &wbar);
    let (u, reprojection) = if reproject {
        let proj = project(&u, None, &cfg.poisson_solver)?;
        (proj.w.clone(), Some(proj))
    } else {
        (u, None)
    };
    Ok(Relaxed {
        u,
        g_ww,
        filter_stats,
        reprojection,
    })
}

fn fail<'a>(state: &'a FlowState, stage: &'static str) -> impl FnOnce(Error) -> Error + 'a {
    move |e| Error::StepFailed {
        step: state.step + 1,
        t: state.t,
        stage,
        norm_u: l2_norm(&state.u),
        norm_w: l2_norm(&state.w),
        source: Box::new(e),
    }
}

/// One full time step.
pub fn advance(state: &FlowState, cfg: &StepperConfig) -> Result<(FlowState, StepReport)> {
    cfg.validate()?;
    let (w_tilde, mstats) = momentum_step(state, cfg).map_err(fail(state, "momentum"))?;
    let (w, u, p, proj, relaxed, defect) = match cfg.mode {
        FilterMode::AfterProjection { reproject } => {
            let (w, p, proj) = projection_step(&w_tilde, Some(&state.p), cfg).map_err(fail(state, "projection"))?;
            let relaxed = filter_relax_step(&w, cfg, reproject).map_err(fail(state, "filter"))?;
            let defect = l2_norm(&w.sub(&w_tilde));
            (w, relaxed.u.clone(), p, proj, relaxed, defect)
        }
        FilterMode::BeforeProjection => {
            let relaxed = filter_relax_step(&w_tilde, cfg, false).map_err(fail(state, "filter"))?;
            let (w, p, proj) = projection_step(&relaxed.u, Some(&state.p), cfg).map_err(fail(state, "projection"))?;
            let defect = l2_norm(&w.sub(&relaxed.u));
            (w.clone(), w, p, proj, relaxed, defect)
        }
    };
    let t = state.t + cfg.dt;
    let norm_w = l2_norm(&w);
    let report = StepReport {
        t,
        kinetic_energy: 0.5 * norm_w * norm_w,
        viscous_dissipation: cfg.nu * cfg.dt * h1_seminorm(&w_tilde).powi(2),
        model_dissipation_increment: cfg.filter.chi0 * cfg.dt * relaxed.g_ww,
        norm_u: l2_norm(&u),
        norm_w,
        norm_wtilde: l2_norm(&w_tilde),
        projection_defect: defect,
        norm_wtilde_minus_uprev: l2_norm(&w_tilde.sub(&state.u)),
        div_residual: proj.div_residual,
        div_tolerance: proj.div_tolerance,
        iters_momentum: mstats.iterations(),
        iters_poisson: proj.stats.iterations + relaxed.reprojection.as_ref().map_or(0, |r| r.stats.iterations),
        iters_filter: relaxed.filter_stats.iterations(),
    };
    let next = FlowState {
        t,
        step: state.step + 1,
        u,
        w,
        w_tilde,
        p,
    };
    Ok((next, report))
}

/// Running totals of the energy bound
/// `|w^l|^2 + sum(|w - w~|^2 + |w~ - u|^2 + nu dt |grad w~|^2) <= |w^0|^2 + sum(dt/nu |f|_{-1}^2)`,
/// with `|w - w~|` replaced by the projection defect when filtering precedes projection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StabilityLedger {
    pub initial_energy: f64,
    pub dissipated: f64,
    pub forcing_work: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Largest `lhs / rhs` seen.
    pub worst_ratio: f64,
    pub violations: usize,
}

/// Relative slack on the energy bound.
pub const STABILITY_SLACK: f64 = 1e-10;

impl StabilityLedger {
    pub fn new(w0: &FaceVectorField) -> Self {
        let e0 = l2_norm(w0).powi(2);
        Self {
            initial_energy: e0,
            lhs: e0,
            rhs: e0,
            ..Self::default()
        }
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + STABILITY_SLACK)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: FlowState,
    pub reports: Vec<StepReport>,
    pub ledger: StabilityLedger,
}

/// `n_steps` calls of `advance`, checking the energy bound after each one.
pub fn run(initial: &FlowState, cfg: &StepperConfig, n_steps: usize) -> Result<RunOutput> {
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
    }
    cfg.validate()?;
    let _ = cfg.chi();
    let mut ledger = StabilityLedger::new(&initial.w);
    let mut state = initial.clone();
    let mut reports = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let (next, rep) = advance(&state, cfg)?;
        if !rep.is_finite() {
            return Err(fail(&state, "report")(Error::InvalidConfig(
                "non-finite step report".into(),
            )));
        }
        if cfg.stability != StabilityCheck::Off {
            if let Some(f) = cfg.forcing_at(next.t, next.grid()) {
                let fn1 = hneg1_norm(&f, &SolverConfig::with_tolerance(1e-12))?;
                ledger.forcing_work += cfg.dt / cfg.nu * fn1 * fn1;
            }
            ledger.dissipated +=
                rep.projection_defect.powi(2) + rep.norm_wtilde_minus_uprev.powi(2) + rep.viscous_dissipation;
            ledger.lhs = rep.norm_w.powi(2) + ledger.dissipated;
            ledger.rhs = ledger.initial_energy + ledger.forcing_work;
            if ledger.rhs > 0.0 {
                ledger.worst_ratio = ledger.worst_ratio.max(ledger.lhs / ledger.rhs);
            }
            if !ledger.holds() {
                ledger.violations += 1;
                let err = Error::StabilityViolation {
                    step: next.step,
                    lhs: ledger.lhs,
                    rhs: ledger.rhs,
                };
                if cfg.stability == StabilityCheck::Abort {
                    return Err(err);
                }
                log::warn!("{err}");
            }
        }
        state = next;
        reports.push(rep);
    }
    Ok(RunOutput { state, reports, ledger })
}
