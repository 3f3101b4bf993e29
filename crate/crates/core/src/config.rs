//! Run configuration, parsed from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bgk::SolverConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::model::{FluxDef, FluxSpec};
use crate::phase_grid::{GridSpec, KineticState, PhaseGrid};
use crate::reference::{burgers_riemann_integral, MacroField};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "BGK_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub flux: FluxDef,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub initial: InitialData,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub comparison: Comparison,
    #[serde(default)]
    pub nondegeneracy: NondegeneracyKnobs,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `rho_l` left of `x0`, `rho_r` right of it.
    Riemann { rho_l: f64, rho_r: f64, x0: f64 },
    /// `base + amp · exp(-(x - center)² / (2 width²))`.
    Gaussian {
        amp: f64,
        center: f64,
        width: f64,
        #[serde(default)]
        base: f64,
    },
    /// `mean + amp · sin(2π periods (x - x_min) / L)`.
    Sine { mean: f64, amp: f64, periods: f64 },
    /// An `x,rho` file with one row per cell.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Comparison {
    #[default]
    None,
    BurgersExact,
    Godunov { refine_factor: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NondegeneracyKnobs {
    pub n_directions: usize,
    pub n_samples: usize,
    pub tol: f64,
}

impl Default for NondegeneracyKnobs {
    fn default() -> Self {
        NondegeneracyKnobs {
            n_directions: 16,
            n_samples: 2001,
            tol: 1e-12,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            Error::config(field, e.into_inner().to_string())
        })
    }

    /// Reads and validates a config; a relative CSV initial-data path is
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = RunConfig::from_json(&text)?;
        if let InitialData::Csv { path: p } = &mut cfg.initial {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        PhaseGrid::new(&self.grid, self.solver.boundary)
    }

    pub fn flux_spec(&self) -> Result<FluxSpec> {
        FluxSpec::new(&self.flux, self.grid.m_cap)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.phase_grid()?;
        self.solver.validate()?;
        self.flux_spec()?;
        match self.initial {
            InitialData::Gaussian { width, .. } if !(width > 0.0) => {
                return Err(Error::config("initial.width", "must be positive"));
            }
            InitialData::Sine { periods, .. } if !(periods > 0.0) => {
                return Err(Error::config("initial.periods", "must be positive"));
            }
            _ => {}
        }
        if let Comparison::Godunov { refine_factor } = self.comparison {
            if refine_factor == 0 {
                return Err(Error::config("comparison.refine_factor", "must be positive"));
            }
        }
        if self.comparison == Comparison::BurgersExact {
            if !matches!(self.initial, InitialData::Riemann { .. }) {
                return Err(Error::config(
                    "comparison",
                    "burgers_exact needs riemann initial data",
                ));
            }
            if !is_burgers(&self.flux) {
                return Err(Error::config("comparison", "burgers_exact needs A(v) = v²/2"));
            }
        }
        let rho = self.initial_density(grid.nx())?;
        let (lo, hi) = rho
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &r| (l.min(r), h.max(r)));
        if lo < 0.0 {
            return Err(Error::config("initial", format!("density {lo} is negative")));
        }
        if hi > self.grid.m_cap - 1.0 + 1e-12 {
            return Err(Error::config(
                "grid.m_cap",
                format!("M = {} is below 1 + max rho0 = {}", self.grid.m_cap, 1.0 + hi),
            ));
        }
        Ok(())
    }

    /// Initial cell values on a grid of `nx` cells over the configured
    /// interval. Riemann and sine data are exact cell averages; the
    /// Gaussian is sampled at cell centres.
    pub fn initial_density(&self, nx: usize) -> Result<Vec<f64>> {
        let (x_min, x_max) = (self.grid.x_min, self.grid.x_max);
        let len = x_max - x_min;
        let dx = len / nx as f64;
        let edge = |i: usize| x_min + i as f64 * dx;
        let rho: Vec<f64> = match &self.initial {
            InitialData::Riemann { rho_l, rho_r, x0 } => (0..nx)
                .map(|i| burgers_riemann_integral(*rho_l, *rho_r, *x0, edge(i), edge(i + 1), 0.0).map(|m| m / dx))
                .collect::<Result<_>>()?,
            InitialData::Gaussian { amp, center, width, base } => (0..nx)
                .map(|i| {
                    let z = (edge(i) + 0.5 * dx - center) / width;
                    base + amp * (-0.5 * z * z).exp()
                })
                .collect(),
            InitialData::Sine { mean, amp, periods } => {
                let k = std::f64::consts::TAU * periods / len;
                (0..nx)
                    .map(|i| {
                        let (a, b) = (edge(i) - x_min, edge(i + 1) - x_min);
                        mean + amp * ((k * a).cos() - (k * b).cos()) / (k * dx)
                    })
                    .collect()
            }
            InitialData::Csv { path } => {
                let field = io::read_macro_csv(path)?;
                if field.nx() != nx {
                    return Err(Error::Input {
                        path: path.clone(),
                        message: format!("{} rows, grid has {nx} cells", field.nx()),
                    });
                }
                field.rho
            }
        };
        // round-off below zero from exact averages of non-negative data
        Ok(rho
            .into_iter()
            .map(|r| if r < 0.0 && r > -1e-12 { 0.0 } else { r })
            .collect())
    }

    pub fn initial_state(&self) -> Result<KineticState> {
        let grid = self.phase_grid()?;
        KineticState::from_macro(grid, &self.initial_density(grid.nx())?)
    }

    pub fn initial_field(&self, nx: usize) -> Result<MacroField> {
        MacroField::new(self.grid.x_min, self.grid.x_max, self.initial_density(nx)?, 0.0)
    }

    /// `output_dir`, placed under `$BGK_OUTPUT_ROOT` when that is set and
    /// the configured path is relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() && !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

fn is_burgers(def: &FluxDef) -> bool {
    match (&def.poly, &def.spline) {
        (Some(p), None) if p.len() == 1 => {
            let c = &p[0];
            c.len() >= 3
                && c[1] == 0.0
                && c[2] == 0.5
                && c.iter().skip(3).all(|&x| x == 0.0)
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "flux": {"dim": 1, "poly": [[0.0, 0.0, 0.5]]},
            "grid": {"x_min": 0.0, "x_max": 2.0, "nx": 40, "m_cap": 2.0, "eps": 0.1, "n_sub": 5},
            "solver": {"h": 1e-3, "cfl": 0.9, "t_end": 0.1, "snapshot_stride": 5, "boundary": "outflow"},
            "initial": {"kind": "riemann", "rho_l": 1.0, "rho_r": 0.0, "x0": 0.5},
            "comparison": {"kind": "burgers_exact"}
        })
    }

    fn parse(v: &serde_json::Value) -> Result<RunConfig> {
        let c = RunConfig::from_json(&v.to_string())?;
        c.validate()?;
        Ok(c)
    }

    fn field_of(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn parses_and_round_trips() {
        let c = parse(&base()).unwrap();
        assert_eq!(c.output_dir, PathBuf::from("out"));
        let back = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_field() {
        let mut v = base();
        v["solver"].as_object_mut().unwrap().remove("h");
        assert_eq!(field_of(parse(&v).unwrap_err()), "solver");
        let mut v = base();
        v["solver"]["cfl"] = serde_json::json!("fast");
        assert_eq!(field_of(parse(&v).unwrap_err()), "solver.cfl");
        let mut v = base();
        v["grid"]["n_sub"] = serde_json::json!(3);
        v["grid"]["eps"] = serde_json::json!(0.07);
        assert_eq!(field_of(parse(&v).unwrap_err()), "grid.n_sub");
        let mut v = base();
        v["grid"]["m_cap"] = serde_json::json!(1.53);
        assert_eq!(field_of(parse(&v).unwrap_err()), "grid.n_sub");
        let mut v = base();
        v["grid"]["m_cap"] = serde_json::json!(1.6);
        v["grid"]["eps"] = serde_json::json!(0.08);
        v["grid"]["n_sub"] = serde_json::json!(4);
        assert_eq!(field_of(parse(&v).unwrap_err()), "grid.m_cap");
        let mut v = base();
        v["bogus"] = serde_json::json!(1);
        assert!(matches!(parse(&v), Err(Error::Config { .. })));
    }

    #[test]
    fn burgers_exact_needs_riemann_and_burgers() {
        let mut v = base();
        v["initial"] = serde_json::json!({"kind": "sine", "mean": 0.5, "amp": 0.25, "periods": 1.0});
        assert_eq!(field_of(parse(&v).unwrap_err()), "comparison");
        let mut v = base();
        v["flux"] = serde_json::json!({"dim": 1, "poly": [[0.0, 1.0]]});
        assert_eq!(field_of(parse(&v).unwrap_err()), "comparison");
    }

    #[test]
    fn initial_profiles() {
        let c = parse(&base()).unwrap();
        let rho = c.initial_density(40).unwrap();
        // x0 = 0.5 is the right edge of cell 9 (dx = 0.05)
        assert!(rho[..10].iter().all(|&r| (r - 1.0).abs() < 1e-12));
        assert!(rho[10..].iter().all(|&r| r.abs() < 1e-12));

        let mut v = base();
        v["initial"] = serde_json::json!({"kind": "riemann", "rho_l": 1.0, "rho_r": 0.0, "x0": 0.51});
        let rho = parse(&v).unwrap().initial_density(40).unwrap();
        assert!((rho[10] - 0.2).abs() < 1e-12);

        let mut v = base();
        v["comparison"] = serde_json::json!({"kind": "none"});
        v["initial"] = serde_json::json!({"kind": "sine", "mean": 0.5, "amp": 0.5, "periods": 1.0});
        let c = parse(&v).unwrap();
        let rho = c.initial_density(40).unwrap();
        let mean = rho.iter().sum::<f64>() / 40.0;
        assert!((mean - 0.5).abs() < 1e-14);
        assert!(rho.iter().all(|&r| (0.0..=1.0).contains(&r)));
        // cell average of sin over [0, dx] with k = π: (1 - cos kdx)/(k dx)
        let k = std::f64::consts::PI;
        let want = 0.5 + 0.5 * (1.0 - (k * 0.05).cos()) / (k * 0.05);
        assert!((rho[0] - want).abs() < 1e-14);

        v["initial"] = serde_json::json!({"kind": "gaussian", "amp": 0.8, "center": 1.025, "width": 0.1});
        let rho = parse(&v).unwrap().initial_density(40).unwrap();
        assert_eq!(rho[20], 0.8);
    }

    #[test]
    fn output_root_override() {
        // only relative paths move
        assert_eq!(resolve_output(Path::new("/abs/dir")), PathBuf::from("/abs/dir"));
    }
}
