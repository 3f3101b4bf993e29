//! C ABI over `bgk-core`.
//!
//! Every function returns a [`BgkStatus`]. On failure a message describing
//! the last error on the calling thread is available from
//! [`bgk_last_error`]. Handles are opaque and must be released with the
//! matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bgk_core::bgk::{self, SolverConfig};
use bgk_core::config::RunConfig;
use bgk_core::model::{check_nondegeneracy, FluxDef, FluxSpec};
use bgk_core::phase_grid::{KineticState, PhaseGrid};
use bgk_core::projection::variational_projection;
use bgk_core::reference::burgers_riemann_exact;
use bgk_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgkStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Config = 3,
    Cfl = 4,
    NonFinite = 5,
    Precondition = 6,
    Degenerate = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

impl From<&Error> for BgkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain { .. } => BgkStatus::Domain,
            Error::Config { .. } | Error::Json(_) => BgkStatus::Config,
            Error::Cfl { .. } => BgkStatus::Cfl,
            Error::NonFinite { .. } => BgkStatus::NonFinite,
            Error::Precondition(_) => BgkStatus::Precondition,
            Error::Degenerate { .. } => BgkStatus::Degenerate,
            Error::Input { .. } | Error::Io(_) | Error::Csv(_) => BgkStatus::Io,
        }
    }
}

/// Outcome of [`bgk_project_column`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BgkProjectionInfo {
    pub rho: f64,
    pub n_steps: usize,
    pub v0: f64,
    pub dominated: bool,
    pub mass_defect: f64,
}

/// A flux `A` on `[0, M]`.
pub struct BgkFlux {
    spec: FluxSpec,
}

/// A kinetic state with its flux and solver settings.
pub struct BgkSolver {
    state: KineticState,
    flux: FluxSpec,
    config: SolverConfig,
    dt: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: BgkStatus, msg: impl Into<String>) -> BgkStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), BgkStatus>) -> BgkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BgkStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(BgkStatus::Panic, format!("panic: {msg}"))
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, BgkStatus>;
}

impl<T> OrStatus<T> for bgk_core::Result<T> {
    fn or_status(self) -> Result<T, BgkStatus> {
        self.map_err(|e| fail(BgkStatus::from(&e), e.to_string()))
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), BgkStatus> {
    if p.is_null() {
        Err(fail(BgkStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bgk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a one-component polynomial flux `A(v) = Σ coeffs[k] v^k` on
/// `[0, m_cap]`.
///
/// # Safety
/// `coeffs` must point to `n_coeffs` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bgk_flux_new_polynomial(
    coeffs: *const f64,
    n_coeffs: usize,
    m_cap: f64,
    out: *mut *mut BgkFlux,
) -> BgkStatus {
    guard(|| {
        non_null(coeffs, "coeffs")?;
        non_null(out, "out")?;
        let c = std::slice::from_raw_parts(coeffs, n_coeffs).to_vec();
        let spec = FluxSpec::new(&FluxDef::polynomial(vec![c]), m_cap).or_status()?;
        *out = Box::into_raw(Box::new(BgkFlux { spec }));
        Ok(())
    })
}

/// # Safety
/// `flux` must come from [`bgk_flux_new_polynomial`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn bgk_flux_free(flux: *mut BgkFlux) {
    if !flux.is_null() {
        drop(Box::from_raw(flux));
    }
}

/// Writes `A(v)` and `A'(v)`.
///
/// # Safety
/// `flux` must be a live handle; `value` and `slope` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bgk_flux_eval(
    flux: *const BgkFlux,
    v: f64,
    value: *mut f64,
    slope: *mut f64,
) -> BgkStatus {
    guard(|| {
        non_null(flux, "flux")?;
        non_null(value, "value")?;
        non_null(slope, "slope")?;
        let f = &(*flux).spec;
        *value = f.eval_flux(v).or_status()?[0];
        *slope = f.eval_flux_derivative(v).or_status()?[0];
        Ok(())
    })
}

/// Scans `A'` on `[0, min(m_bound, M)]` for flat pieces; `pass` is false
/// when one is found.
///
/// # Safety
/// `flux` must be a live handle; `pass` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bgk_flux_check_nondegeneracy(
    flux: *const BgkFlux,
    m_bound: f64,
    n_samples: usize,
    tol: f64,
    pass: *mut bool,
) -> BgkStatus {
    guard(|| {
        non_null(flux, "flux")?;
        non_null(pass, "pass")?;
        let r = check_nondegeneracy(&(*flux).spec, m_bound, 2, n_samples, tol).or_status()?;
        *pass = r.pass;
        Ok(())
    })
}

/// Builds a solver from a JSON run configuration and its initial data.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bgk_solver_new(
    config_json: *const c_char,
    out: *mut *mut BgkSolver,
) -> BgkStatus {
    guard(|| {
        non_null(config_json, "config_json")?;
        non_null(out, "out")?;
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| fail(BgkStatus::Config, format!("config is not UTF-8: {e}")))?;
        let cfg = RunConfig::from_json(text).or_status()?;
        cfg.validate().or_status()?;
        let state = cfg.initial_state().or_status()?;
        let flux = cfg.flux_spec().or_status()?;
        let dt = bgk::time_step(state.grid(), &flux, cfg.solver.cfl);
        *out = Box::into_raw(Box::new(BgkSolver {
            state,
            flux,
            config: cfg.solver,
            dt,
        }));
        Ok(())
    })
}

/// # Safety
/// `solver` must come from [`bgk_solver_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn bgk_solver_free(solver: *mut BgkSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

fn advance_by(s: &mut BgkSolver, dt: f64) -> Result<(), BgkStatus> {
    let mut next = s.state.clone();
    bgk::step(&mut next, &s.flux, &s.config, dt).or_status()?;
    if !next.is_finite() {
        return Err(fail(BgkStatus::NonFinite, "non-finite value in kinetic state"));
    }
    s.state = next;
    Ok(())
}

/// One full time step of length `cfl · dx / max|A'|`.
///
/// # Safety
/// `solver` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bgk_solver_step(solver: *mut BgkSolver) -> BgkStatus {
    guard(|| {
        non_null(solver, "solver")?;
        let s = &mut *solver;
        let dt = s.dt;
        advance_by(s, dt)
    })
}

/// Steps until the solver time reaches `t_target`, shortening the last step.
///
/// # Safety
/// `solver` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bgk_solver_advance(solver: *mut BgkSolver, t_target: f64) -> BgkStatus {
    guard(|| {
        non_null(solver, "solver")?;
        let s = &mut *solver;
        if !(t_target >= s.state.t) || !t_target.is_finite() {
            return Err(fail(
                BgkStatus::Domain,
                format!("t_target = {t_target} precedes t = {}", s.state.t),
            ));
        }
        while t_target - s.state.t > 1e-12 * t_target.max(1.0) {
            let remaining = t_target - s.state.t;
            if remaining <= s.dt * (1.0 + 1e-9) {
                advance_by(s, remaining)?;
                s.state.t = t_target;
            } else {
                let dt = s.dt;
                advance_by(s, dt)?;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `solver` must be a live handle; `t` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bgk_solver_time(solver: *const BgkSolver, t: *mut f64) -> BgkStatus {
    guard(|| {
        non_null(solver, "solver")?;
        non_null(t, "t")?;
        *t = (*solver).state.t;
        Ok(())
    })
}

/// Number of space cells.
///
/// # Safety
/// `solver` must be a live handle; `nx` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bgk_solver_nx(solver: *const BgkSolver, nx: *mut usize) -> BgkStatus {
    guard(|| {
        non_null(solver, "solver")?;
        non_null(nx, "nx")?;
        *nx = (*solver).state.grid().nx();
        Ok(())
    })
}

/// Copies the density `ρ_i = Σ_j f_ij dv` into `rho`, which holds `len`
/// doubles. Fails with `BufferTooSmall` when `len < nx`.
///
/// # Safety
/// `solver` must be a live handle; `rho` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bgk_solver_density(
    solver: *const BgkSolver,
    rho: *mut f64,
    len: usize,
) -> BgkStatus {
    guard(|| {
        non_null(solver, "solver")?;
        non_null(rho, "rho")?;
        let d = (*solver).state.macro_density();
        if len < d.len() {
            return Err(fail(
                BgkStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {}", d.len()),
            ));
        }
        std::slice::from_raw_parts_mut(rho, d.len()).copy_from_slice(&d);
        Ok(())
    })
}

/// Projects a velocity profile `f` of `nv` cells on `[0, m_cap]` onto the
/// entropy-ladder minimizer with step `eps`, writing `nv` values into `pi`.
///
/// # Safety
/// `f` must point to `nv` readable doubles, `pi` to `nv` writable doubles,
/// `info` may be null.
#[no_mangle]
pub unsafe extern "C" fn bgk_project_column(
    f: *const f64,
    nv: usize,
    m_cap: f64,
    eps: f64,
    pi: *mut f64,
    info: *mut BgkProjectionInfo,
) -> BgkStatus {
    guard(|| {
        non_null(f, "f")?;
        non_null(pi, "pi")?;
        let col = std::slice::from_raw_parts(f, nv);
        if let Some(k) = col.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(fail(BgkStatus::Domain, format!("f[{k}] = {} is outside [0, 1]", col[k])));
        }
        let grid = PhaseGrid::column(m_cap, nv, eps).or_status()?;
        let p = variational_projection(col, &grid);
        std::slice::from_raw_parts_mut(pi, nv).copy_from_slice(&p.pi);
        if !info.is_null() {
            *info = BgkProjectionInfo {
                rho: p.rho,
                n_steps: p.n_steps,
                v0: p.v0,
                dominated: p.dominated,
                mass_defect: p.mass_defect,
            };
        }
        Ok(())
    })
}

/// Entropy solution of Burgers' equation from a single jump at `x0`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bgk_burgers_riemann_exact(
    rho_l: f64,
    rho_r: f64,
    x0: f64,
    x: f64,
    t: f64,
    out: *mut f64,
) -> BgkStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = burgers_riemann_exact(rho_l, rho_r, x0, x, t).or_status()?;
        Ok(())
    })
}
