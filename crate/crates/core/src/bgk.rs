//! Time integration of `∂_t f + A'(v) ∂_x f = (Π^ε_f - f)/h` by splitting
//! into upwind transport per velocity band and an exact exponential
//! relaxation towards the frozen projection of each column.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FluxSpec;
use crate::phase_grid::{Boundary, KineticState, PhaseGrid};
use crate::projection::{project_into, ProjectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    /// transport(dt), then relaxation(dt)
    #[default]
    Lie,
    /// relaxation(dt/2), transport(dt), relaxation(dt/2)
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Relaxation time.
    pub h: f64,
    pub cfl: f64,
    pub t_end: f64,
    pub snapshot_stride: usize,
    pub boundary: Boundary,
    #[serde(default)]
    pub splitting: Splitting,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::config("solver.h", "must be positive and finite"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::config("solver.cfl", "must lie in (0, 1]"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("solver.t_end", "must be non-negative and finite"));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::config("solver.snapshot_stride", "must be positive"));
        }
        Ok(())
    }
}

/// `dt = cfl · dx / max(sup|A'|, 1e-12)`.
pub fn time_step(grid: &PhaseGrid, flux: &FluxSpec, cfl: f64) -> f64 {
    cfl * grid.dx() / flux.lipschitz_bound().max(1e-12)
}

fn band_speeds(grid: &PhaseGrid, flux: &FluxSpec) -> Result<Vec<f64>> {
    if flux.dim() != 1 {
        return Err(Error::config(
            "flux.dim",
            format!("time stepping supports one space dimension, got {}", flux.dim()),
        ));
    }
    Ok((0..grid.nv()).map(|j| flux.speed(0, grid.v_center(j))).collect())
}

/// Advects every velocity band `j` with speed `A'(v_j)` by one first-order
/// upwind step.
///
/// Returns the time-integrated net outflow of each band through the domain
/// boundary, `dt (F_right - F_left)`, so that the band content `Σ_i f_ij dx`
/// changes by exactly minus that amount. Always zero for periodic grids.
pub fn transport_step(state: &mut KineticState, flux: &FluxSpec, dt: f64) -> Result<Vec<f64>> {
    let grid = *state.grid();
    let speeds = band_speeds(&grid, flux)?;
    let max_speed = speeds.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let courant = dt * max_speed / grid.dx();
    if courant > 1.0 + 1e-12 {
        return Err(Error::Cfl {
            courant,
            dt,
            dx: grid.dx(),
            speed: max_speed,
        });
    }
    let nx = grid.nx();
    let nv = grid.nv();
    let nu: Vec<f64> = speeds.iter().map(|a| a * dt / grid.dx()).collect();

    let old = std::mem::take(&mut state.f);
    let row = |i: usize| &old[i * nv..(i + 1) * nv];
    let (ghost_left, ghost_right) = match grid.boundary() {
        Boundary::Periodic => (row(nx - 1), row(0)),
        Boundary::Outflow => (row(0), row(nx - 1)),
    };
    let mut new = vec![0.0; nx * nv];
    new.par_chunks_mut(nv).enumerate().for_each(|(i, out)| {
        let here = row(i);
        let left = if i == 0 { ghost_left } else { row(i - 1) };
        let right = if i + 1 == nx { ghost_right } else { row(i + 1) };
        for j in 0..nv {
            let c = nu[j];
            out[j] = if c >= 0.0 {
                here[j] - c * (here[j] - left[j])
            } else {
                here[j] - c * (right[j] - here[j])
            };
        }
    });

    let outflow = (0..nv)
        .map(|j| {
            let a = speeds[j];
            let upwind = |l: f64, r: f64| if a >= 0.0 { a * l } else { a * r };
            let f_left = upwind(ghost_left[j], row(0)[j]);
            let f_right = upwind(row(nx - 1)[j], ghost_right[j]);
            match grid.boundary() {
                Boundary::Periodic => 0.0,
                Boundary::Outflow => dt * (f_right - f_left),
            }
        })
        .collect();
    state.f = new;
    Ok(outflow)
}

/// Relaxes every column towards its projection, frozen over the substep:
/// `f ← Π + (f - Π) exp(-dt/h)`. Returns the projections used.
pub fn relaxation_step(state: &mut KineticState, dt: f64, h: f64) -> Result<Vec<ProjectionResult>> {
    if !(h > 0.0) {
        return Err(Error::domain("h", h, "(0, inf)"));
    }
    let grid = *state.grid();
    let decay = (-dt / h).exp();
    let nv = grid.nv();
    let dv = grid.dv();
    let projections = state
        .f
        .par_chunks_mut(nv)
        .map(|col| {
            let mut pi = vec![0.0; nv];
            let (n_steps, v0, dominated, rho) = project_into(col, &grid, &mut pi);
            let mass_defect = (pi.iter().sum::<f64>() * dv - rho).abs();
            for (f, p) in col.iter_mut().zip(&pi) {
                *f = p + (*f - p) * decay;
            }
            ProjectionResult {
                pi,
                rho,
                n_steps,
                v0,
                dominated,
                mass_defect,
            }
        })
        .collect();
    Ok(projections)
}

/// One relaxation substep: the state entering it and the frozen projections.
#[derive(Debug, Clone)]
pub struct RelaxationRecord {
    pub dt: f64,
    pub before: Vec<f64>,
    pub projections: Vec<ProjectionResult>,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: usize,
    pub dt: f64,
    pub h: f64,
    pub relaxations: Vec<RelaxationRecord>,
    /// Per-band net boundary outflow accumulated during the transport substep.
    pub boundary_outflow: Vec<f64>,
}

fn relax_recorded(
    state: &mut KineticState,
    dt: f64,
    h: f64,
    out: &mut Vec<RelaxationRecord>,
) -> Result<()> {
    let before = state.f.clone();
    let projections = relaxation_step(state, dt, h)?;
    out.push(RelaxationRecord {
        dt,
        before,
        projections,
    });
    Ok(())
}

/// Advances `state` by `dt` with the configured splitting.
pub fn step(
    state: &mut KineticState,
    flux: &FluxSpec,
    config: &SolverConfig,
    dt: f64,
) -> Result<StepReport> {
    let mut relaxations = Vec::with_capacity(2);
    let boundary_outflow = match config.splitting {
        Splitting::Lie => {
            let out = transport_step(state, flux, dt)?;
            relax_recorded(state, dt, config.h, &mut relaxations)?;
            out
        }
        Splitting::Strang => {
            relax_recorded(state, 0.5 * dt, config.h, &mut relaxations)?;
            let out = transport_step(state, flux, dt)?;
            relax_recorded(state, 0.5 * dt, config.h, &mut relaxations)?;
            out
        }
    };
    state.t += dt;
    Ok(StepReport {
        step: 0,
        dt,
        h: config.h,
        relaxations,
        boundary_outflow,
    })
}

/// Callbacks fed by [`run`].
pub trait RunObserver {
    fn on_step(
        &mut self,
        _before: &KineticState,
        _after: &KineticState,
        _report: &StepReport,
    ) -> Result<()> {
        Ok(())
    }

    /// Called for the initial state, every `snapshot_stride` steps and for
    /// the final state.
    fn on_snapshot(&mut self, _step: usize, _state: &KineticState) -> Result<()> {
        Ok(())
    }
}

impl RunObserver for () {}

/// Steps from `initial` to `config.t_end`. The last step is shortened to land
/// on `t_end` exactly.
pub fn run(
    initial: KineticState,
    flux: &FluxSpec,
    config: &SolverConfig,
    observer: &mut dyn RunObserver,
) -> Result<KineticState> {
    config.validate()?;
    let dt = time_step(initial.grid(), flux, config.cfl);
    let mut state = initial;
    state.t = 0.0;
    observer.on_snapshot(0, &state)?;

    let mut n = 0usize;
    let mut last_snapshot = 0usize;
    loop {
        let remaining = config.t_end - state.t;
        if remaining <= 1e-12 * config.t_end.max(1.0) {
            break;
        }
        let (dt_step, lands) = if remaining <= dt * (1.0 + 1e-9) {
            (remaining, true)
        } else {
            (dt, false)
        };
        let before = state.clone();
        let mut report = step(&mut state, flux, config, dt_step)?;
        n += 1;
        report.step = n;
        if lands {
            state.t = config.t_end;
        }
        if !state.is_finite() {
            return Err(Error::NonFinite { step: n });
        }
        observer.on_step(&before, &state, &report)?;
        if n % config.snapshot_stride == 0 {
            observer.on_snapshot(n, &state)?;
            last_snapshot = n;
        }
    }
    if last_snapshot != n {
        observer.on_snapshot(n, &state)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FluxDef;
    use crate::phase_grid::GridSpec;

    fn grid(nx: usize, boundary: Boundary) -> PhaseGrid {
        PhaseGrid::new(
            &GridSpec {
                x_min: 0.0,
                x_max: 1.0,
                nx,
                m_cap: 1.0,
                eps: 0.2,
                n_sub: 4,
            },
            boundary,
        )
        .unwrap()
    }

    fn linear(c: f64) -> FluxSpec {
        FluxSpec::new(&FluxDef::polynomial(vec![vec![0.0, c]]), 1.0).unwrap()
    }

    fn burgers() -> FluxSpec {
        FluxSpec::new(&FluxDef::burgers(), 1.0).unwrap()
    }

    fn config(h: f64, t_end: f64) -> SolverConfig {
        SolverConfig {
            h,
            cfl: 0.9,
            t_end,
            snapshot_stride: 1,
            boundary: Boundary::Periodic,
            splitting: Splitting::Lie,
        }
    }

    #[test]
    fn zero_speed_band_is_unchanged() {
        let g = grid(8, Boundary::Periodic);
        let flux = FluxSpec::new(&FluxDef::polynomial(vec![vec![1.0]]), 1.0).unwrap();
        let rho: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
        let mut s = KineticState::from_macro(g, &rho).unwrap();
        let before = s.clone();
        transport_step(&mut s, &flux, 0.01).unwrap();
        assert_eq!(s.f, before.f);
    }

    #[test]
    fn constant_in_x_is_unchanged() {
        let g = grid(8, Boundary::Outflow);
        let mut s = KineticState::from_macro(g, &[0.37; 8]).unwrap();
        let before = s.clone();
        let dt = time_step(&g, &burgers(), 0.9);
        transport_step(&mut s, &burgers(), dt).unwrap();
        assert_eq!(s.f, before.f);
    }

    #[test]
    fn unit_courant_shifts_by_one_cell() {
        let g = grid(10, Boundary::Periodic);
        let c = 2.0;
        let mut rho = vec![0.0; 10];
        rho[3] = 0.6;
        let mut s = KineticState::from_macro(g, &rho).unwrap();
        let before = s.clone();
        transport_step(&mut s, &linear(c), g.dx() / c).unwrap();
        for i in 0..10 {
            assert_eq!(s.column((i + 1) % 10), before.column(i));
        }
        // and backwards for negative speed
        transport_step(&mut s, &linear(-c), g.dx() / c).unwrap();
        assert_eq!(s.f, before.f);
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let g = grid(10, Boundary::Periodic);
        let mut s = KineticState::zeros(g);
        let err = transport_step(&mut s, &linear(1.0), 2.0 * g.dx()).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
    }

    #[test]
    fn multidimensional_flux_is_rejected_by_the_stepper() {
        let g = grid(4, Boundary::Periodic);
        let flux =
            FluxSpec::new(&FluxDef::polynomial(vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]]), 1.0)
                .unwrap();
        let mut s = KineticState::zeros(g);
        assert!(matches!(transport_step(&mut s, &flux, 0.01), Err(Error::Config { .. })));
    }

    #[test]
    fn outflow_accounts_for_boundary_flux() {
        let g = grid(10, Boundary::Outflow);
        let rho: Vec<f64> = (0..10).map(|i| if i < 5 { 0.8 } else { 0.1 }).collect();
        let mut s = KineticState::from_macro(g, &rho).unwrap();
        let bands_before: Vec<f64> = (0..g.nv())
            .map(|j| s.columns().map(|c| c[j]).sum::<f64>() * g.dx())
            .collect();
        let dt = time_step(&g, &burgers(), 0.9);
        let out = transport_step(&mut s, &burgers(), dt).unwrap();
        for j in 0..g.nv() {
            let after = s.columns().map(|c| c[j]).sum::<f64>() * g.dx();
            assert!((bands_before[j] - out[j] - after).abs() < 1e-14);
        }
    }

    #[test]
    fn relaxation_fixed_point_and_limits() {
        let g = grid(3, Boundary::Periodic);
        let mut s = KineticState::from_macro(g, &[0.1, 0.5, 0.93]).unwrap();
        let before = s.clone();
        relaxation_step(&mut s, 0.1, 0.01).unwrap();
        assert_eq!(s.f, before.f);

        let mut s = KineticState::from_values(g, vec![0.5; 3 * g.nv()], 0.0).unwrap();
        let p = relaxation_step(&mut s, 1e6, 1e-6).unwrap();
        for (i, proj) in p.iter().enumerate() {
            assert_eq!(s.column(i), &proj.pi[..]);
        }
    }

    #[test]
    fn relaxation_by_ln2_halves_the_gap() {
        let g = grid(1, Boundary::Periodic);
        let f0 = vec![0.5; g.nv()];
        let mut s = KineticState::from_values(g, f0.clone(), 0.0).unwrap();
        let h = 0.01;
        let p = relaxation_step(&mut s, h * std::f64::consts::LN_2, h).unwrap();
        for j in 0..g.nv() {
            let want = 0.5 * (p[0].pi[j] + f0[j]);
            assert!((s.f[j] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn rigid_translation_of_equilibria_with_linear_flux() {
        let g = grid(20, Boundary::Periodic);
        let c = 1.0;
        let rho: Vec<f64> = (0..20).map(|i| if (5..9).contains(&i) { 0.7 } else { 0.2 }).collect();
        let mut s = KineticState::from_macro(g, &rho).unwrap();
        let mut cfg = config(1e-3, 0.0);
        cfg.cfl = 1.0;
        let dt = time_step(&g, &linear(c), 1.0);
        for _ in 0..3 {
            step(&mut s, &linear(c), &cfg, dt).unwrap();
        }
        let shifted = KineticState::from_macro(
            g,
            &(0..20).map(|i| rho[(i + 17) % 20]).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(s.f, shifted.f);
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = grid(10, Boundary::Periodic);
        let s = KineticState::zeros(g);
        let out = run(s, &burgers(), &config(1e-3, 0.3), &mut ()).unwrap();
        assert!(out.f.iter().all(|&v| v == 0.0));
        assert_eq!(out.t, 0.3);
    }

    #[test]
    fn one_step_conserves_mass() {
        let g = grid(50, Boundary::Periodic);
        let rho: Vec<f64> = (0..50)
            .map(|i| 0.4 + 0.3 * (std::f64::consts::TAU * g.x_center(i)).sin())
            .collect();
        for splitting in [Splitting::Lie, Splitting::Strang] {
            let mut s = KineticState::from_macro(g, &rho).unwrap();
            let m0 = s.total_mass();
            let mut cfg = config(1e-3, 1.0);
            cfg.splitting = splitting;
            step(&mut s, &burgers(), &cfg, time_step(&g, &burgers(), 0.9)).unwrap();
            assert!((s.total_mass() - m0).abs() <= 1e-12 * m0);
        }
    }

    #[test]
    fn t_end_zero_returns_initial_with_one_snapshot() {
        struct Count(usize);
        impl RunObserver for Count {
            fn on_snapshot(&mut self, _: usize, _: &KineticState) -> Result<()> {
                self.0 += 1;
                Ok(())
            }
        }
        let g = grid(5, Boundary::Periodic);
        let s = KineticState::from_macro(g, &[0.2, 0.4, 0.6, 0.4, 0.2]).unwrap();
        let mut count = Count(0);
        let out = run(s.clone(), &burgers(), &config(1e-3, 0.0), &mut count).unwrap();
        assert_eq!(out.f, s.f);
        assert_eq!(count.0, 1);
    }

    #[test]
    fn uniform_equilibrium_is_stationary() {
        let g = grid(16, Boundary::Outflow);
        let s = KineticState::from_macro(g, &[0.55; 16]).unwrap();
        let out = run(s.clone(), &burgers(), &config(1e-3, 0.2), &mut ()).unwrap();
        for (a, b) in out.f.iter().zip(&s.f) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn bad_config_fields_are_named() {
        let mut c = config(1e-3, 1.0);
        c.cfl = 1.5;
        match c.validate().unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "solver.cfl"),
            e => panic!("{e}"),
        }
        c.cfl = 0.5;
        c.h = 0.0;
        assert!(c.validate().is_err());
    }
}
