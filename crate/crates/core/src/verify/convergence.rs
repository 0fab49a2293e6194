//! Error measurement against the manufactured solution and temporal
//! refinement studies.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manufactured::{exact_fields, forcing_fn};
use crate::error::{Error, Result};
use crate::filters::{DeltaRule, FilterSpec};
use crate::grid::{h1_seminorm, l2_norm, StaggeredGrid};
use crate::stepper::{advance, FilterMode, FlowState, StabilityCheck, StepperConfig};

/// Errors of one time level against the exact solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub t: f64,
    /// `|u(t) - w~|`
    pub eps_tilde: f64,
    /// `|u(t) - w|`
    pub eps: f64,
    /// `|u(t) - u^n|`
    pub e: f64,
    /// `|p^n - p(t)|`, both mean-free.
    pub q: f64,
    pub eps_tilde_h1: f64,
    pub eps_h1: f64,
    pub e_h1: f64,
}

pub fn measure_errors(state: &FlowState) -> ErrorRecord {
    let (u, p) = exact_fields(state.t, state.grid());
    let mut ph = state.p.clone();
    ph.remove_mean();
    let (dt, dw, du) = (u.sub(&state.w_tilde), u.sub(&state.w), u.sub(&state.u));
    ErrorRecord {
        t: state.t,
        eps_tilde: l2_norm(&dt),
        eps: l2_norm(&dw),
        e: l2_norm(&du),
        q: l2_norm(&ph.sub(&p)),
        eps_tilde_h1: h1_seminorm(&dt),
        eps_h1: h1_seminorm(&dw),
        e_h1: h1_seminorm(&du),
    }
}

/// `log2(E_k / E_{k+1})` for consecutive entries; `None` where undefined.
pub fn rates(errors: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|p| (p[0] > 0.0 && p[1] > 0.0).then(|| (p[0] / p[1]).log2()))
        .collect()
}

/// How the filter radius follows the time step in a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyDelta {
    /// `delta = c h`, independent of `dt`.
    MeshMultiple(f64),
    /// `delta = c sqrt(dt)`, so `delta^2` scales with `dt`.
    SqrtDt(f64),
}

impl StudyDelta {
    pub fn rule(&self, dt: f64) -> DeltaRule {
        match *self {
            StudyDelta::MeshMultiple(c) => DeltaRule::MeshMultiple(c),
            StudyDelta::SqrtDt(c) => DeltaRule::Uniform(c * dt.sqrt()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub n: usize,
    pub nu: f64,
    pub t_final: f64,
    /// Strictly decreasing time steps; `t_final / dt` must be an integer.
    pub dt_list: Vec<f64>,
    pub delta: StudyDelta,
    /// Filter template; its radius is replaced per row.
    pub filter: FilterSpec,
    pub mode: FilterMode,
    pub base: Option<StepperConfig>,
}

/// One refinement level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub delta_max: f64,
    pub h: f64,
    /// `sqrt(dt sum |e^n|^2)`
    pub e_v: f64,
    /// `sqrt(dt sum |q^n|^2)`
    pub e_p: f64,
    /// `max_n |eps~^n|`
    pub sup_eps_tilde: f64,
    pub rate_v: Option<f64>,
    pub rate_p: Option<f64>,
    pub floored: bool,
}

/// Rates below this count as "stopped decreasing".
pub const FLOOR_RATE: f64 = 0.35;

pub const RATE_V_BAND: (f64, f64) = (0.7, 1.3);
pub const RATE_P_MIN: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    InsufficientRows,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::InsufficientRows => "insufficient rows",
        })
    }
}

impl ConvergenceTable {
    /// Builds the table from measured rows: fills in rates and flags rows at
    /// the spatial error floor. Once a row is floored, all finer rows are too.
    pub fn from_rows(mut rows: Vec<ConvergenceRow>) -> Self {
        let ev: Vec<f64> = rows.iter().map(|r| r.e_v).collect();
        let ep: Vec<f64> = rows.iter().map(|r| r.e_p).collect();
        let (rv, rp) = (rates(&ev), rates(&ep));
        let mut floored = false;
        for (k, row) in rows.iter_mut().enumerate() {
            row.rate_v = None;
            row.rate_p = None;
            if k > 0 {
                row.rate_v = rv[k - 1];
                row.rate_p = rp[k - 1];
                floored |= row.rate_v.is_none_or(|r| r < FLOOR_RATE);
            }
            row.floored = floored;
        }
        Self { rows }
    }

    /// Rates from consecutive non-floored rows.
    pub fn usable_rates(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .skip(1)
            .filter(|r| !r.floored)
            .filter_map(|r| Some((r.rate_v?, r.rate_p?)))
            .collect()
    }

    pub fn verdict(&self) -> Verdict {
        let rates = self.usable_rates();
        if rates.is_empty() {
            return Verdict::InsufficientRows;
        }
        let ok = rates
            .iter()
            .all(|&(v, p)| v >= RATE_V_BAND.0 && v <= RATE_V_BAND.1 && p >= RATE_P_MIN);
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "dt,delta_max,h,E_v,E_p,rate_v,rate_p,floored")?;
        let opt = |r: Option<f64>| r.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{},{},{}",
                r.dt,
                r.delta_max,
                r.h,
                r.e_v,
                r.e_p,
                opt(r.rate_v),
                opt(r.rate_p),
                r.floored
            )?;
        }
        Ok(())
    }
}

impl StudyConfig {
    /// The default temporal study: 128^2, `nu = 0.05`, `T = 1`, `chi0 = 1`, `delta = h`.
    pub fn standard(filter: FilterSpec) -> Self {
        Self {
            n: 128,
            nu: 0.05,
            t_final: 1.0,
            dt_list: vec![1.0 / 40.0, 1.0 / 80.0, 1.0 / 160.0, 1.0 / 320.0],
            delta: StudyDelta::MeshMultiple(1.0),
            filter,
            mode: FilterMode::default(),
            base: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt_list.is_empty() {
            return Err(Error::InvalidConfig("dt_list is empty".into()));
        }
        if self.dt_list.windows(2).any(|p| p[1] >= p[0]) {
            return Err(Error::InvalidConfig("dt_list must be strictly decreasing".into()));
        }
        for &dt in &self.dt_list {
            let steps = self.t_final / dt;
            if !(dt > 0.0) || (steps - steps.round()).abs() > 1e-9 * steps {
                return Err(Error::InvalidConfig(format!(
                    "t_final / dt is not an integer for dt = {dt}"
                )));
            }
        }
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidConfig("t_final must be positive".into()));
        }
        StaggeredGrid::unit_square(self.n)?;
        Ok(())
    }

    fn row_config(&self, dt: f64) -> StepperConfig {
        let mut filter = self.filter.clone();
        filter.delta = self.delta.rule(dt);
        let mut cfg = match &self.base {
            Some(b) => StepperConfig {
                dt,
                nu: self.nu,
                filter: filter.clone(),
                ..b.clone()
            },
            None => StepperConfig::new(dt, self.nu, filter),
        };
        cfg.mode = self.mode;
        cfg.forcing = Some(forcing_fn(self.nu));
        cfg.stability = StabilityCheck::Off;
        cfg
    }

    /// Runs one row: the manufactured problem to `t_final` with step `dt`.
    pub fn run_row(&self, dt: f64) -> Result<(ConvergenceRow, Vec<ErrorRecord>)> {
        let grid = StaggeredGrid::unit_square(self.n)?;
        let cfg = self.row_config(dt);
        let n_steps = (self.t_final / dt).round() as usize;
        let (u0, p0) = exact_fields(0.0, &grid);
        let mut state = FlowState::new(0.0, u0);
        state.p = p0;
        let mut records = Vec::with_capacity(n_steps);
        for _ in 0..n_steps {
            state = advance(&state, &cfg)?.0;
            records.push(measure_errors(&state));
        }
        let sum = |f: fn(&ErrorRecord) -> f64| (dt * records.iter().map(|r| f(r).powi(2)).sum::<f64>()).sqrt();
        let row = ConvergenceRow {
            dt,
            delta_max: cfg.filter.delta_max(&grid)?,
            h: grid.h_min(),
            e_v: sum(|r| r.e),
            e_p: sum(|r| r.q),
            sup_eps_tilde: records.iter().fold(0.0, |m, r| m.max(r.eps_tilde)),
            rate_v: None,
            rate_p: None,
            floored: false,
        };
        log::info!("dt = {dt:e}: E_v = {:e}, E_p = {:e}", row.e_v, row.e_p);
        Ok((row, records))
    }
}

/// Runs every row (in parallel) and assembles the table in `dt_list` order.
pub fn convergence_study(study: &StudyConfig) -> Result<ConvergenceTable> {
    study.validate()?;
    let rows = study
        .dt_list
        .par_iter()
        .map(|&dt| study.run_row(dt).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable::from_rows(rows))
}
