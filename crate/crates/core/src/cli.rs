//! Command-line front end: `run`, `project`, `check-flux`, `sweep`, `compare`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::bgk::{run, time_step, RunObserver, StepReport};
use crate::config::{resolve_output, Comparison, InitialData, RunConfig};
use crate::diagnostics::{DiagnosticsOptions, RunDiagnostics, RunSummary};
use crate::error::{Error, Result};
use crate::io;
use crate::model::check_nondegeneracy;
use crate::phase_grid::{KineticState, PhaseGrid};
use crate::projection::variational_projection;
use crate::reference::{burgers_riemann_field, godunov_run, l1_distance, MacroField};

#[derive(Debug, Parser)]
#[command(name = "bgk", version, about = "Kinetic BGK relaxation solver for scalar conservation laws")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write snapshots, diagnostics and a summary.
    Run { config: PathBuf },
    /// Project a single velocity profile `v,f` onto the entropy-ladder minimizer.
    Project {
        column: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Velocity bound M; defaults to the upper edge of the column grid.
        #[arg(long = "m-cap")]
        m_cap: Option<f64>,
        #[arg(long, default_value = "project")]
        out: PathBuf,
    },
    /// Check the flux of a config for flat pieces of `A'`.
    CheckFlux {
        config: PathBuf,
        /// Velocity range to scan; defaults to the largest initial density.
        #[arg(long = "m-bound")]
        m_bound: Option<f64>,
    },
    /// Run a config once per parameter value and tabulate the results.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// L¹ distance between two `x,rho` files on the same grid.
    Compare { a: PathBuf, b: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    H,
    Eps,
    Nx,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::H => "h",
            SweepParam::Eps => "eps",
            SweepParam::Nx => "nx",
        }
    }
}

/// Everything a run produces, before anything is written.
pub struct RunOutcome {
    pub final_state: KineticState,
    pub diagnostics: RunDiagnostics,
    pub snapshots: Vec<(usize, MacroField)>,
    pub reference: Option<MacroField>,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub summary: RunSummary,
    pub comparison: Comparison,
    pub l1_reference: Option<f64>,
    pub nx: usize,
    pub nv: usize,
    pub dx: f64,
    pub dv: f64,
    pub dt: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    resolution: Resolution,
}

#[derive(Serialize)]
struct Resolution {
    nx: usize,
    nv: usize,
    dx: f64,
    dv: f64,
    dt: f64,
    eps: f64,
    n_sub: usize,
}

struct Collector {
    diagnostics: RunDiagnostics,
    snapshots: Vec<(usize, MacroField)>,
}

impl RunObserver for Collector {
    fn on_step(&mut self, before: &KineticState, after: &KineticState, report: &StepReport) -> Result<()> {
        self.diagnostics.on_step(before, after, report)
    }

    fn on_snapshot(&mut self, step: usize, state: &KineticState) -> Result<()> {
        self.snapshots.push((step, io::macro_field(state)));
        self.diagnostics.on_snapshot(step, state)
    }
}

/// Runs a validated config and its comparison, without touching the disk
/// (CSV initial data excepted).
pub fn simulate(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let grid = config.phase_grid()?;
    let flux = config.flux_spec()?;
    let initial = config.initial_state()?;
    let mut collector = Collector {
        diagnostics: RunDiagnostics::new(flux.clone(), DiagnosticsOptions::default()),
        snapshots: Vec::new(),
    };
    let final_state = run(initial, &flux, &config.solver, &mut collector)?;
    let t = final_state.t;
    let reference = match config.comparison {
        Comparison::None => None,
        Comparison::BurgersExact => {
            let InitialData::Riemann { rho_l, rho_r, x0 } = config.initial else {
                return Err(Error::config("comparison", "burgers_exact needs riemann initial data"));
            };
            Some(if t > 0.0 {
                burgers_riemann_field(rho_l, rho_r, x0, grid.x_min(), grid.x_max(), grid.nx(), t)?
            } else {
                config.initial_field(grid.nx())?
            })
        }
        Comparison::Godunov { refine_factor } => {
            let fine = config.initial_field(grid.nx() * refine_factor)?;
            let out = godunov_run(&flux, &fine, t, config.solver.cfl, config.solver.boundary)?;
            Some(out.coarsen(refine_factor)?)
        }
    };
    let last = io::macro_field(&final_state);
    let l1_reference = reference.as_ref().map(|r| l1_distance(&last, r)).transpose()?;
    let report = RunReport {
        summary: collector.diagnostics.summary(),
        comparison: config.comparison,
        l1_reference,
        nx: grid.nx(),
        nv: grid.nv(),
        dx: grid.dx(),
        dv: grid.dv(),
        dt: time_step(&grid, &flux, config.solver.cfl),
    };
    Ok(RunOutcome {
        final_state,
        diagnostics: collector.diagnostics,
        snapshots: collector.snapshots,
        reference,
        report,
    })
}

fn resolution(grid: &PhaseGrid, dt: f64) -> Resolution {
    Resolution {
        nx: grid.nx(),
        nv: grid.nv(),
        dx: grid.dx(),
        dv: grid.dv(),
        dt,
        eps: grid.eps(),
        n_sub: grid.n_sub(),
    }
}

/// Writes `run_manifest.json`, `macro/rho_<step>.csv`, `f_final.csv`,
/// `diagnostics.jsonl`, `summary.json` and, with a comparison, `reference.csv`.
pub fn write_outcome(config: &RunConfig, outcome: &RunOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let grid = *outcome.final_state.grid();
    io::write_json(
        &dir.join("run_manifest.json"),
        &Manifest {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config,
            resolution: resolution(&grid, outcome.report.dt),
        },
    )?;
    for (step, field) in &outcome.snapshots {
        io::write_macro_csv(&dir.join("macro").join(format!("rho_{step:06}.csv")), field)?;
    }
    io::write_state_csv(&dir.join("f_final.csv"), &outcome.final_state)?;
    if let Some(r) = &outcome.reference {
        io::write_macro_csv(&dir.join("reference.csv"), r)?;
    }
    io::write_jsonl(&dir.join("diagnostics.jsonl"), &outcome.diagnostics.records)?;
    io::write_json(&dir.join("summary.json"), &outcome.report)
}

pub fn cmd_run(config_path: &Path) -> Result<RunReport> {
    let config = RunConfig::load(config_path)?;
    let outcome = simulate(&config)?;
    write_outcome(&config, &outcome, &config.resolved_output_dir())?;
    Ok(outcome.report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionSummary {
    pub rho: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub v0: f64,
    pub dominated: bool,
    pub mass_defect: f64,
}

/// Projects the `v,f` profile in `column` and writes `pi.csv` (`v,pi`) and
/// `projection.json` into `out`.
pub fn cmd_project(column: &Path, eps: f64, m_cap: Option<f64>, out: &Path) -> Result<ProjectionSummary> {
    let (v, f) = io::read_pairs(column, ["v", "f"])?;
    if let Some((k, bad)) = f.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Input {
            path: column.to_path_buf(),
            message: format!("row {}: f = {bad} is outside [0, 1]", k + 1),
        });
    }
    let (lo, hi) = io::uniform_extent(column, &v)?;
    let m = m_cap.unwrap_or(hi);
    let dv = (hi - lo) / v.len() as f64;
    if lo.abs() > 1e-9 * dv || (hi - m).abs() > 1e-9 * m {
        return Err(Error::Input {
            path: column.to_path_buf(),
            message: format!("velocity cells span [{lo}, {hi}], expected [0, {m}]"),
        });
    }
    let grid = PhaseGrid::column(m, v.len(), eps)?;
    let p = variational_projection(&f, &grid);
    std::fs::create_dir_all(out)?;
    let vc: Vec<f64> = (0..grid.nv()).map(|j| grid.v_center(j)).collect();
    io::write_pairs(&out.join("pi.csv"), ["v", "pi"], &vc, &p.pi)?;
    let summary = ProjectionSummary {
        rho: p.rho,
        n: p.n_steps,
        v0: p.v0,
        dominated: p.dominated,
        mass_defect: p.mass_defect,
    };
    io::write_json(&out.join("projection.json"), &summary)?;
    Ok(summary)
}

pub fn cmd_check_flux(config_path: &Path, m_bound: Option<f64>) -> Result<crate::model::NondegeneracyReport> {
    let config = RunConfig::load(config_path)?;
    let flux = config.flux_spec()?;
    let m = match m_bound {
        Some(m) => m,
        None => {
            let rho_max = config
                .initial_density(config.grid.nx)?
                .into_iter()
                .fold(0.0, f64::max);
            if rho_max > 0.0 {
                rho_max
            } else {
                config.grid.m_cap
            }
        }
    };
    let k = config.nondegeneracy;
    check_nondegeneracy(&flux, m, k.n_directions, k.n_samples, k.tol)
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: &'static str,
    pub value: f64,
    pub status: &'static str,
    pub l1_reference: Option<f64>,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub e3: Option<f64>,
    pub e4: Option<f64>,
    pub max_deviation: Option<f64>,
    pub max_deviation_relative: Option<f64>,
    pub max_deviation_excess: Option<f64>,
    pub c_flux: Option<f64>,
    pub c_alpha: Option<f64>,
    pub supp_diam_max: Option<f64>,
    pub worst_entropy_violation: Option<f64>,
    pub worst_defect_negativity: Option<f64>,
    pub domination_failure_count: Option<u64>,
    pub mass_drift_rel: Option<f64>,
    pub steps: Option<usize>,
    pub error: String,
}

impl SweepRow {
    fn from_result(param: SweepParam, value: f64, r: &Result<RunReport>) -> Self {
        let ok = r.as_ref().ok();
        let s = ok.map(|r| &r.summary);
        SweepRow {
            param: param.name(),
            value,
            status: if ok.is_some() { "ok" } else { "failed" },
            l1_reference: ok.and_then(|r| r.l1_reference),
            e1: s.map(|s| s.e1_final),
            e2: s.map(|s| s.e2_final),
            e3: s.map(|s| s.e3_final),
            e4: s.map(|s| s.e4_final),
            max_deviation: s.map(|s| s.max_deviation),
            max_deviation_relative: s.map(|s| s.max_deviation_relative),
            max_deviation_excess: s.map(|s| s.max_deviation_excess),
            c_flux: s.map(|s| s.c_flux),
            c_alpha: s.map(|s| s.c_alpha),
            supp_diam_max: s.map(|s| s.supp_diam_max),
            worst_entropy_violation: s.map(|s| s.worst_entropy_violation),
            worst_defect_negativity: s.map(|s| s.worst_defect_negativity),
            domination_failure_count: s.map(|s| s.domination_failure_count),
            mass_drift_rel: s.map(|s| s.mass_drift_rel),
            steps: s.map(|s| s.steps),
            error: r.as_ref().err().map(|e| e.to_string()).unwrap_or_default(),
        }
    }
}

/// `base` with one parameter replaced. An `eps` value keeps the velocity
/// cell width and changes `n_sub`.
pub fn sweep_variant(base: &RunConfig, param: SweepParam, value: f64) -> Result<RunConfig> {
    let mut c = base.clone();
    match param {
        SweepParam::H => c.solver.h = value,
        SweepParam::Nx => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::config("grid.nx", format!("{value} is not a positive integer")));
            }
            c.grid.nx = value as usize;
        }
        SweepParam::Eps => {
            let dv = base.grid.eps / base.grid.n_sub as f64;
            let n_sub = (value / dv).round();
            if n_sub < 1.0 || (n_sub * dv - value).abs() > 1e-9 * value {
                return Err(Error::config(
                    "grid.n_sub",
                    format!("eps = {value} is not a multiple of the velocity cell width {dv}"),
                ));
            }
            c.grid.eps = value;
            c.grid.n_sub = n_sub as usize;
        }
    }
    c.validate()?;
    Ok(c)
}

/// Runs every variant in parallel, each into `<output>/<param>_<index>`,
/// and writes `<output>/sweep.csv`.
pub fn cmd_sweep(config_path: &Path, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    let base = RunConfig::load(config_path)?;
    let root = base.resolved_output_dir();
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(k, &value)| {
            let result = sweep_variant(&base, param, value).and_then(|mut c| {
                c.output_dir = base.output_dir.join(format!("{}_{k}", param.name()));
                let outcome = simulate(&c)?;
                write_outcome(&c, &outcome, &root.join(format!("{}_{k}", param.name())))?;
                Ok(outcome.report)
            });
            SweepRow::from_result(param, value, &result)
        })
        .collect();
    std::fs::create_dir_all(&root)?;
    let mut w = csv::Writer::from_path(root.join("sweep.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

pub fn cmd_compare(a: &Path, b: &Path) -> Result<f64> {
    l1_distance(&io::read_macro_csv(a)?, &io::read_macro_csv(b)?)
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

/// Parses `args` and executes the command. Returns the process exit code:
/// 0 on success, 1 when a check fails, 2 on errors.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run { config } => {
            let report = cmd_run(&config)?;
            print_json(&report)?;
            Ok(0)
        }
        Command::Project { column, eps, m_cap, out } => {
            print_json(&cmd_project(&column, eps, m_cap, &resolve_output(&out))?)?;
            Ok(0)
        }
        Command::CheckFlux { config, m_bound } => {
            let report = cmd_check_flux(&config, m_bound)?;
            print_json(&report)?;
            Ok(if report.pass { 0 } else { 1 })
        }
        Command::Sweep { config, param, values } => {
            let rows = cmd_sweep(&config, param, &values)?;
            for r in &rows {
                match r.status {
                    "ok" => println!("{} = {}: ok, L1 = {:?}", r.param, r.value, r.l1_reference),
                    _ => println!("{} = {}: failed: {}", r.param, r.value, r.error),
                }
            }
            Ok(if rows.iter().all(|r| r.status == "ok") { 0 } else { 1 })
        }
        Command::Compare { a, b } => {
            println!("{}", cmd_compare(&a, &b)?);
            Ok(0)
        }
    }
}
