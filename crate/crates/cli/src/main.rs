#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nsfilt::grid::snapshot;
use nsfilt::stepper::{run, write_reports_csv, FlowState};
use nsfilt::verify::{convergence_study, exact_fields, property_suite, random_solenoidal, Verdict};
use nsfilt::{FaceVectorField, Field};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use config::{Config, ConfigError, Initial};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VIOLATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "nsfilt",
    version,
    about = "Filter-stabilized projection solver for 2D incompressible flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output] dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for random initial data and property fields (overrides [output] seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors and the final verdict
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Time-step a flow and write the step reports and final fields
    Run,
    /// Temporal convergence study against the manufactured solution
    Convergence,
    /// Check the filter operator and stepper properties on random fields
    FilterProps,
}

enum Failure {
    Config(String),
    Solver(String),
    Violation(String),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<nsfilt::Error> for Failure {
    fn from(e: nsfilt::Error) -> Self {
        match &e {
            _ if e.is_solver_failure() => Failure::Solver(e.to_string()),
            nsfilt::Error::StabilityViolation { .. } => Failure::Violation(e.to_string()),
            nsfilt::Error::StepFailed { source, .. }
                if matches!(**source, nsfilt::Error::StabilityViolation { .. }) =>
            {
                Failure::Violation(e.to_string())
            }
            nsfilt::Error::InvalidConfig(_) | nsfilt::Error::InvalidGrid(_) => Failure::Config(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

struct Ctx {
    config: Config,
    out: PathBuf,
    seed: u64,
    quiet: bool,
}

impl Ctx {
    fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        fs::create_dir_all(&self.out)?;
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn write_field(ctx: &Ctx, name: &str, f: &Field) -> Result<(), Failure> {
    let mut w = ctx.create(name)?;
    snapshot::write_csv(f, &mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    seed: u64,
    n_steps: usize,
    t_final: f64,
    ledger: &'a nsfilt::stepper::StabilityLedger,
}

fn cmd_run(ctx: &Ctx) -> Result<(), Failure> {
    let rc = ctx.config.run_config()?;
    let u0 = match rc.initial {
        Initial::Random => random_solenoidal(&rc.grid, rc.modes, &mut ChaCha8Rng::seed_from_u64(ctx.seed)),
        Initial::Manufactured => exact_fields(0.0, &rc.grid).0,
        Initial::Zero => FaceVectorField::zeros(&rc.grid),
    };
    let mut initial = FlowState::new(0.0, u0);
    if rc.initial == Initial::Manufactured {
        initial.p = exact_fields(0.0, &rc.grid).1;
    }
    log::info!(
        "running {} steps on {}x{} (dt = {}, nu = {})",
        rc.n_steps,
        rc.grid.nx(),
        rc.grid.ny(),
        rc.stepper.dt,
        rc.stepper.nu
    );
    let out = run(&initial, &rc.stepper, rc.n_steps)?;

    let mut w = ctx.create("steps.csv")?;
    write_reports_csv(&out.reports, &mut w)?;
    w.flush()?;
    write_field(ctx, "final_u.csv", &out.state.u.u)?;
    write_field(ctx, "final_v.csv", &out.state.u.v)?;
    write_field(ctx, "final_p.csv", &out.state.p)?;
    let summary = RunSummary {
        seed: ctx.seed,
        n_steps: rc.n_steps,
        t_final: out.state.t,
        ledger: &out.ledger,
    };
    let mut w = ctx.create("summary.json")?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| Failure::Other(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;

    let last = out.reports.last().map(|r| r.kinetic_energy).unwrap_or(0.0);
    ctx.say(format!(
        "t = {}, kinetic energy {last:e}, energy ledger worst ratio {:.6}",
        out.state.t, out.ledger.worst_ratio
    ));
    if !out.ledger.holds() {
        return Err(Failure::Violation(format!(
            "energy bound violated in {} step(s) (worst lhs/rhs {:.12})",
            out.ledger.violations, out.ledger.worst_ratio
        )));
    }
    Ok(())
}

fn cmd_convergence(ctx: &Ctx) -> Result<(), Failure> {
    let study = ctx.config.study_config()?;
    log::info!("convergence study on {}^2 with {} rows", study.n, study.dt_list.len());
    let table = convergence_study(&study)?;
    let mut w = ctx.create("convergence.csv")?;
    table.write_csv(&mut w)?;
    w.flush()?;
    if !ctx.quiet {
        let mut s = Vec::new();
        table.write_csv(&mut s)?;
        print!("{}", String::from_utf8_lossy(&s));
    }
    let verdict = table.verdict();
    println!("verdict: {verdict}");
    match verdict {
        Verdict::Fail => Err(Failure::Violation(
            "convergence rates outside the acceptance bands".into(),
        )),
        _ => Ok(()),
    }
}

fn cmd_filter_props(ctx: &Ctx) -> Result<(), Failure> {
    let cfg = ctx.config.property_config(ctx.seed)?;
    let report = property_suite(&cfg)?;
    let mut w = ctx.create("filter_props.json")?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::Other(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    for c in &report.checks {
        if let Some(n) = &c.notice {
            log::warn!("{} ({}, n = {}): {n}", c.name, c.indicator, c.size);
        }
    }
    let failures = report.failures().count();
    println!(
        "seed {}: {} checks, {failures} failed: {}",
        report.seed,
        report.checks.len(),
        if report.pass { "PASS" } else { "FAIL" }
    );
    if report.pass {
        Ok(())
    } else {
        for c in report.failures() {
            eprintln!(
                "failed: {} ({}, n = {}), margin {:?}",
                c.name, c.indicator, c.size, c.margin
            );
        }
        Err(Failure::Violation(format!("{failures} property check(s) failed")))
    }
}

fn load(cli: &Cli) -> Result<Ctx, Failure> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::parse("")?,
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => config.seed()?,
    };
    let out = cli.out.clone().unwrap_or_else(|| config.out_dir());
    Ok(Ctx {
        config,
        out,
        seed,
        quiet: cli.quiet,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = load(&cli).and_then(|ctx| match cli.command {
        Command::Run => cmd_run(&ctx),
        Command::Convergence => cmd_convergence(&ctx),
        Command::FilterProps => cmd_filter_props(&ctx),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, kind, msg) = match f {
                Failure::Config(m) => (EXIT_CONFIG, "config error", m),
                Failure::Solver(m) => (EXIT_SOLVER, "solver failure", m),
                Failure::Violation(m) => (EXIT_VIOLATION, "violation", m),
                Failure::Other(m) => (1, "error", m),
            };
            eprintln!("nsfilt: {kind}: {msg}");
            ExitCode::from(code)
        }
    }
}
