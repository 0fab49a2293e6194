//! Run configuration: TOML sections whose keys mirror the library's field names.
//!
//! ```toml
//! [grid]
//! nx = 64            # ny defaults to nx
//! lx = 1.0           # lx, ly default to 1
//!
//! [time]
//! dt = 0.01
//! n_steps = 100      # or t_final
//!
//! [physics]
//! nu = 0.01
//! initial = "random" # random | manufactured | zero
//! forcing = "none"   # none | manufactured
//! modes = 8
//!
//! [filter]
//! chi0 = 1.0
//! indicator = "q_criterion"
//! c_delta = 1.0      # or delta = <absolute radius>
//! mode = "after_projection"
//!
//! [solver]
//! rel_tol = 1e-10
//!
//! [output]
//! dir = "out"
//! seed = 42
//! ```
//!
//! `[convergence]` and `[properties]` tune the other two subcommands.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use nsfilt::filters::{DeltaRule, FilterSpec, IndicatorKind, DEFAULT_ETA};
use nsfilt::linsolve::SolverConfig;
use nsfilt::stepper::{FilterMode, StabilityCheck, StepperConfig};
use nsfilt::verify::{forcing_fn, PropertyConfig, StudyConfig, StudyDelta};
use nsfilt::StaggeredGrid;
use serde::Deserialize;
use toml::Spanned;

/// A configuration problem; the message names the key and, when known, the line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type V<T> = Option<Spanned<T>>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    time: TimeSection,
    #[serde(default)]
    physics: PhysicsSection,
    #[serde(default)]
    filter: FilterSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    convergence: ConvergenceSection,
    #[serde(default)]
    properties: PropertiesSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    nx: V<i64>,
    ny: V<i64>,
    lx: V<f64>,
    ly: V<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    dt: V<f64>,
    t_final: V<f64>,
    n_steps: V<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhysicsSection {
    nu: V<f64>,
    initial: V<String>,
    forcing: V<String>,
    modes: V<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterSection {
    chi0: V<f64>,
    indicator: V<String>,
    eta: V<f64>,
    c_delta: V<f64>,
    delta: V<f64>,
    eps_floor: V<f64>,
    mode: V<String>,
    reproject: V<bool>,
    stability: V<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    rel_tol: V<f64>,
    abs_tol: V<f64>,
    max_iter: V<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: V<String>,
    seed: V<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvergenceSection {
    n: V<i64>,
    t_final: V<f64>,
    dt_list: V<Vec<f64>>,
    delta_rule: V<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropertiesSection {
    sizes: V<Vec<i64>>,
    n_fields: V<i64>,
    indicators: V<Vec<String>>,
    c_delta: V<Vec<f64>>,
    run_steps: V<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initial {
    Random,
    Manufactured,
    Zero,
}

/// Everything `run` needs, validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: StaggeredGrid,
    pub n_steps: usize,
    pub stepper: StepperConfig,
    pub initial: Initial,
    pub modes: usize,
}

/// A parsed configuration file.
#[derive(Debug)]
pub struct Config {
    src: String,
    raw: Raw,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl Config {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let raw: Raw = toml::from_str(src).map_err(|e| {
            let at = e
                .span()
                .map(|s| format!(" (line {})", line_of(src, s.start)))
                .unwrap_or_default();
            ConfigError(format!("{}{at}", e.message()))
        })?;
        Ok(Self {
            src: src.to_owned(),
            raw,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&src)
    }

    fn line(&self, span: Range<usize>) -> usize {
        line_of(&self.src, span.start)
    }

    fn bad<T>(&self, key: &str, v: &Spanned<T>, why: impl fmt::Display) -> ConfigError {
        ConfigError(format!("invalid {key} (line {}): {why}", self.line(v.span())))
    }

    fn missing(&self, section: &str, key: &str) -> ConfigError {
        let header = format!("[{section}]");
        match self.src.lines().position(|l| l.trim() == header) {
            Some(k) => ConfigError(format!("missing key: {key} (section {header} at line {})", k + 1)),
            None => ConfigError(format!("missing key: {key}")),
        }
    }

    fn positive(&self, key: &str, v: &V<f64>) -> Result<Option<f64>, ConfigError> {
        match v {
            Some(s) if !(*s.get_ref() > 0.0 && s.get_ref().is_finite()) => Err(self.bad(key, s, "must be positive")),
            Some(s) => Ok(Some(*s.get_ref())),
            None => Ok(None),
        }
    }

    fn count(&self, key: &str, v: &V<i64>, min: i64) -> Result<Option<usize>, ConfigError> {
        match v {
            Some(s) if *s.get_ref() < min => Err(self.bad(key, s, format!("must be at least {min}"))),
            Some(s) => Ok(Some(*s.get_ref() as usize)),
            None => Ok(None),
        }
    }

    fn grid(&self) -> Result<StaggeredGrid, ConfigError> {
        let g = &self.raw.grid;
        let nx = self.count("nx", &g.nx, 2)?.ok_or_else(|| self.missing("grid", "nx"))?;
        let ny = self.count("ny", &g.ny, 2)?.unwrap_or(nx);
        let lx = self.positive("lx", &g.lx)?.unwrap_or(1.0);
        let ly = self.positive("ly", &g.ly)?.unwrap_or(1.0);
        StaggeredGrid::new(nx, ny, lx, ly).map_err(|e| ConfigError(format!("invalid [grid]: {e}")))
    }

    fn eta(&self) -> Result<f64, ConfigError> {
        Ok(self.positive("eta", &self.raw.filter.eta)?.unwrap_or(DEFAULT_ETA))
    }

    fn indicator(&self, key: &str, v: &Spanned<String>) -> Result<IndicatorKind, ConfigError> {
        IndicatorKind::parse(v.get_ref(), self.eta()?).map_err(|e| self.bad(key, v, e))
    }

    pub fn solver(&self) -> Result<SolverConfig, ConfigError> {
        let s = &self.raw.solver;
        let mut cfg = SolverConfig::default();
        if let Some(t) = self.positive("rel_tol", &s.rel_tol)? {
            cfg.rel_tol = t;
        }
        if let Some(t) = self.positive("abs_tol", &s.abs_tol)? {
            cfg.abs_tol = t;
        }
        cfg.max_iter = self.count("max_iter", &s.max_iter, 1)?;
        Ok(cfg)
    }

    /// The filter template; `delta` defaults to one mesh width.
    pub fn filter(&self) -> Result<FilterSpec, ConfigError> {
        let f = &self.raw.filter;
        let kind = match &f.indicator {
            Some(s) => self.indicator("indicator", s)?,
            None => IndicatorKind::Constant,
        };
        let delta = match (&f.c_delta, &f.delta) {
            (Some(c), Some(_)) => return Err(self.bad("c_delta", c, "give either c_delta or delta, not both")),
            (Some(c), None) if !(*c.get_ref() >= 0.0) => return Err(self.bad("c_delta", c, "must be non-negative")),
            (Some(c), None) => DeltaRule::MeshMultiple(*c.get_ref()),
            (None, Some(d)) if !(*d.get_ref() >= 0.0) => return Err(self.bad("delta", d, "must be non-negative")),
            (None, Some(d)) => DeltaRule::Uniform(*d.get_ref()),
            (None, None) => DeltaRule::MeshMultiple(1.0),
        };
        let mut spec = FilterSpec::new(kind, delta);
        spec.solver = self.solver()?;
        if let Some(c) = &f.chi0 {
            if !(*c.get_ref() >= 0.0) {
                return Err(self.bad("chi0", c, "must be non-negative"));
            }
            spec.chi0 = *c.get_ref();
        }
        if let Some(e) = &f.eps_floor {
            if !(*e.get_ref() >= 0.0) {
                return Err(self.bad("eps_floor", e, "must be non-negative"));
            }
            spec.eps_floor = *e.get_ref();
        }
        spec.validate()
            .map_err(|e| ConfigError(format!("invalid [filter]: {e}")))?;
        Ok(spec)
    }

    fn mode(&self) -> Result<FilterMode, ConfigError> {
        let f = &self.raw.filter;
        let reproject = f.reproject.as_ref().map(|r| *r.get_ref()).unwrap_or(true);
        match &f.mode {
            None => Ok(FilterMode::AfterProjection { reproject }),
            Some(m) => match m.get_ref().as_str() {
                "after_projection" => Ok(FilterMode::AfterProjection { reproject }),
                "before_projection" => Ok(FilterMode::BeforeProjection),
                other => Err(self.bad("mode", m, format!("unknown mode {other:?}"))),
            },
        }
    }

    fn stability(&self) -> Result<StabilityCheck, ConfigError> {
        match &self.raw.filter.stability {
            None => Ok(StabilityCheck::Warn),
            Some(s) => match s.get_ref().as_str() {
                "off" => Ok(StabilityCheck::Off),
                "warn" => Ok(StabilityCheck::Warn),
                "abort" => Ok(StabilityCheck::Abort),
                other => Err(self.bad("stability", s, format!("unknown value {other:?}"))),
            },
        }
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        match &self.raw.output.seed {
            Some(s) if *s.get_ref() < 0 => Err(self.bad("seed", s, "must be non-negative")),
            Some(s) => Ok(*s.get_ref() as u64),
            None => Ok(0),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.raw
            .output
            .dir
            .as_ref()
            .map(|d| PathBuf::from(d.get_ref()))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn nu(&self) -> Result<Option<f64>, ConfigError> {
        self.positive("nu", &self.raw.physics.nu)
    }

    pub fn run_config(&self) -> Result<RunConfig, ConfigError> {
        let grid = self.grid()?;
        let t = &self.raw.time;
        let dt = self.positive("dt", &t.dt)?.ok_or_else(|| self.missing("time", "dt"))?;
        let nu = self.nu()?.ok_or_else(|| self.missing("physics", "nu"))?;
        let from_t = match self.positive("t_final", &t.t_final)? {
            Some(tf) => {
                let steps = tf / dt;
                if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 1.0 {
                    let v = t.t_final.as_ref().unwrap();
                    return Err(self.bad("t_final", v, format!("not a positive multiple of dt = {dt}")));
                }
                Some(steps.round() as usize)
            }
            None => None,
        };
        let n_steps = match (self.count("n_steps", &t.n_steps, 1)?, from_t) {
            (Some(n), Some(m)) if n != m => {
                return Err(self.bad(
                    "n_steps",
                    t.n_steps.as_ref().unwrap(),
                    format!("disagrees with t_final / dt = {m}"),
                ))
            }
            (Some(n), _) | (None, Some(n)) => n,
            (None, None) => return Err(self.missing("time", "n_steps")),
        };

        let p = &self.raw.physics;
        let manufactured_needs_unit = |key: &str, v: &Spanned<String>| {
            if grid.lx() != 1.0 || grid.ly() != 1.0 {
                Err(self.bad(key, v, "the manufactured solution lives on the unit square"))
            } else {
                Ok(())
            }
        };
        let initial = match &p.initial {
            None => Initial::Random,
            Some(s) => match s.get_ref().as_str() {
                "random" => Initial::Random,
                "zero" => Initial::Zero,
                "manufactured" => {
                    manufactured_needs_unit("initial", s)?;
                    Initial::Manufactured
                }
                other => return Err(self.bad("initial", s, format!("unknown initial condition {other:?}"))),
            },
        };
        let mut stepper = StepperConfig::new(dt, nu, self.filter()?);
        if let Some(s) = &p.forcing {
            match s.get_ref().as_str() {
                "none" => {}
                "manufactured" => {
                    manufactured_needs_unit("forcing", s)?;
                    stepper.forcing = Some(forcing_fn(nu));
                }
                other => return Err(self.bad("forcing", s, format!("unknown forcing {other:?}"))),
            }
        }
        stepper.mode = self.mode()?;
        stepper.momentum_solver = self.solver()?;
        stepper.poisson_solver = self.solver()?;
        stepper.stability = self.stability()?;
        stepper.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(RunConfig {
            grid,
            n_steps,
            stepper,
            initial,
            modes: self.count("modes", &p.modes, 1)?.unwrap_or(8),
        })
    }

    /// The temporal study; unset keys keep the standard study's values.
    pub fn study_config(&self) -> Result<StudyConfig, ConfigError> {
        let c = &self.raw.convergence;
        let filter = self.filter()?;
        let c_delta = match (&filter.delta, &self.raw.filter.delta) {
            (DeltaRule::MeshMultiple(c), _) => *c,
            (_, Some(d)) => return Err(self.bad("delta", d, "the study needs c_delta, the radius follows the rule")),
            _ => 1.0,
        };
        let mut study = StudyConfig::standard(filter);
        if let Some(n) = self.count("n", &c.n, 2)? {
            study.n = n;
        }
        if let Some(nu) = self.nu()? {
            study.nu = nu;
        }
        if let Some(t) = self.positive("t_final", &c.t_final)? {
            study.t_final = t;
        }
        if let Some(l) = &c.dt_list {
            study.dt_list = l.get_ref().clone();
        }
        study.delta = match &c.delta_rule {
            None => StudyDelta::MeshMultiple(c_delta),
            Some(r) => match r.get_ref().as_str() {
                "mesh" => StudyDelta::MeshMultiple(c_delta),
                "sqrt_dt" => StudyDelta::SqrtDt(c_delta),
                other => return Err(self.bad("delta_rule", r, format!("unknown rule {other:?}"))),
            },
        };
        study.mode = self.mode()?;
        if self.raw.solver.rel_tol.is_some() || self.raw.solver.abs_tol.is_some() || self.raw.solver.max_iter.is_some()
        {
            let mut base = StepperConfig::new(1.0, study.nu, study.filter.clone());
            base.momentum_solver = self.solver()?;
            base.poisson_solver = self.solver()?;
            study.base = Some(base);
        }
        study.validate().map_err(|e| match &c.dt_list {
            Some(l) => self.bad("dt_list", l, e),
            None => ConfigError(e.to_string()),
        })?;
        Ok(study)
    }

    pub fn property_config(&self, seed: u64) -> Result<PropertyConfig, ConfigError> {
        let p = &self.raw.properties;
        let mut cfg = PropertyConfig::new(seed);
        if let Some(s) = &p.sizes {
            if s.get_ref().iter().any(|&n| n < 2) {
                return Err(self.bad("sizes", s, "sizes must be at least 2"));
            }
            cfg.sizes = s.get_ref().iter().map(|&n| n as usize).collect();
        }
        if let Some(n) = self.count("n_fields", &p.n_fields, 1)? {
            cfg.n_fields = n;
        }
        if let Some(list) = &p.indicators {
            cfg.indicators = list
                .get_ref()
                .iter()
                .map(|s| IndicatorKind::parse(s, self.eta()?).map_err(|e| self.bad("indicators", list, e)))
                .collect::<Result<_, _>>()?;
        }
        if let Some(c) = &p.c_delta {
            cfg.lower_bound_c_delta = c.get_ref().clone();
        }
        if let Some(n) = self.count("run_steps", &p.run_steps, 0)? {
            cfg.run_steps = n;
        }
        if self.raw.solver.rel_tol.is_some() {
            cfg.solver = self.solver()?;
        }
        cfg.validate().map_err(|e| match &p.sizes {
            Some(s) => self.bad("sizes", s, e),
            None => ConfigError(e.to_string()),
        })?;
        Ok(cfg)
    }
}
