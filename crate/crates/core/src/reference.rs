//! Reference solutions: the exact Burgers Riemann solution and a first-order
//! finite-volume scheme with the Engquist–Osher flux.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Component, FluxSpec};
use crate::phase_grid::Boundary;

/// Cell averages of a density on a uniform 1-D grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroField {
    pub x_min: f64,
    pub x_max: f64,
    pub rho: Vec<f64>,
    pub t: f64,
}

impl MacroField {
    pub fn new(x_min: f64, x_max: f64, rho: Vec<f64>, t: f64) -> Result<Self> {
        if !(x_max > x_min) || rho.is_empty() {
            return Err(Error::config("grid", "need x_max > x_min and nx > 0"));
        }
        Ok(MacroField { x_min, x_max, rho, t })
    }

    /// Samples `g` on the cell averages produced by `avg(a, b)`.
    pub fn from_averages(x_min: f64, x_max: f64, nx: usize, t: f64, avg: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let dx = (x_max - x_min) / nx as f64;
        let rho = (0..nx)
            .map(|i| avg(x_min + i as f64 * dx, x_min + (i + 1) as f64 * dx))
            .collect();
        MacroField::new(x_min, x_max, rho, t)
    }

    pub fn nx(&self) -> usize {
        self.rho.len()
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx() as f64
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.dx()
    }

    fn same_grid(&self, other: &MacroField) -> bool {
        self.nx() == other.nx() && self.x_min == other.x_min && self.x_max == other.x_max
    }

    /// Averages groups of `factor` consecutive cells.
    pub fn coarsen(&self, factor: usize) -> Result<MacroField> {
        if factor == 0 || self.nx() % factor != 0 {
            return Err(Error::Precondition(format!(
                "cannot coarsen {} cells by {factor}",
                self.nx()
            )));
        }
        let rho = self
            .rho
            .chunks_exact(factor)
            .map(|c| c.iter().sum::<f64>() / factor as f64)
            .collect();
        MacroField::new(self.x_min, self.x_max, rho, self.t)
    }
}

/// Entropy solution of Burgers' equation `ρ_t + (ρ²/2)_x = 0` from a single
/// jump at `x0`, evaluated at `(x, t)`.
pub fn burgers_riemann_exact(rho_l: f64, rho_r: f64, x0: f64, x: f64, t: f64) -> Result<f64> {
    check_riemann(rho_l, rho_r, t)?;
    let xi = (x - x0) / t;
    Ok(if rho_l > rho_r {
        if xi < 0.5 * (rho_l + rho_r) {
            rho_l
        } else {
            rho_r
        }
    } else if xi <= rho_l {
        rho_l
    } else if xi >= rho_r {
        rho_r
    } else {
        xi
    })
}

fn check_riemann(rho_l: f64, rho_r: f64, t: f64) -> Result<()> {
    if !(rho_l >= 0.0) {
        return Err(Error::domain("rho_l", rho_l, "[0, inf)"));
    }
    if !(rho_r >= 0.0) {
        return Err(Error::domain("rho_r", rho_r, "[0, inf)"));
    }
    if !(t > 0.0) {
        return Err(Error::domain("t", t, "(0, inf)"));
    }
    Ok(())
}

/// `∫_a^b ρ(x, t) dx` of the Burgers Riemann solution; `t = 0` gives the
/// initial step.
pub fn burgers_riemann_integral(rho_l: f64, rho_r: f64, x0: f64, a: f64, b: f64, t: f64) -> Result<f64> {
    let piece = |lo: f64, hi: f64, val: f64| (hi.min(b) - lo.max(a)).max(0.0) * val;
    if t == 0.0 {
        check_riemann(rho_l, rho_r, 1.0)?;
        return Ok(piece(f64::NEG_INFINITY, x0, rho_l) + piece(x0, f64::INFINITY, rho_r));
    }
    check_riemann(rho_l, rho_r, t)?;
    if rho_l > rho_r {
        let s = x0 + 0.5 * (rho_l + rho_r) * t;
        return Ok(piece(f64::NEG_INFINITY, s, rho_l) + piece(s, f64::INFINITY, rho_r));
    }
    let (xl, xr) = (x0 + rho_l * t, x0 + rho_r * t);
    let (lo, hi) = (a.max(xl), b.min(xr));
    let fan = if hi > lo {
        ((hi - x0).powi(2) - (lo - x0).powi(2)) / (2.0 * t)
    } else {
        0.0
    };
    Ok(piece(f64::NEG_INFINITY, xl, rho_l) + fan + piece(xr, f64::INFINITY, rho_r))
}

/// Exact cell averages of the Burgers Riemann solution at time `t`.
pub fn burgers_riemann_field(
    rho_l: f64,
    rho_r: f64,
    x0: f64,
    x_min: f64,
    x_max: f64,
    nx: usize,
    t: f64,
) -> Result<MacroField> {
    let dx = (x_max - x_min) / nx as f64;
    let rho = (0..nx)
        .map(|i| {
            let a = x_min + i as f64 * dx;
            burgers_riemann_integral(rho_l, rho_r, x0, a, a + dx, t).map(|m| m / dx)
        })
        .collect::<Result<Vec<_>>>()?;
    MacroField::new(x_min, x_max, rho, t)
}

/// Engquist–Osher flux
/// `F(u, w) = A(0) + ∫_0^u max(A', 0) + ∫_0^w min(A', 0)`,
/// evaluated exactly from the sign changes of `A'` on `[0, M]`.
#[derive(Debug, Clone)]
pub struct EngquistOsher {
    comp: Component,
    a0: f64,
    /// Sorted break points `0 = b_0 < ... < b_n = M` with the sign of `A'`
    /// fixed on each piece.
    breaks: Vec<f64>,
    increasing: Vec<bool>,
}

impl EngquistOsher {
    pub fn new(flux: &FluxSpec) -> Result<Self> {
        if flux.dim() != 1 {
            return Err(Error::config(
                "flux.dim",
                format!("reference solver supports one space dimension, got {}", flux.dim()),
            ));
        }
        let comp = flux.components()[0].clone();
        let m = flux.m_cap();
        let mut breaks = vec![0.0];
        breaks.extend(comp.slope_sign_breaks(0.0, m).into_iter().filter(|&b| b > 0.0 && b < m));
        breaks.push(m);
        let increasing = breaks
            .windows(2)
            .map(|w| comp.value(w[1]) >= comp.value(w[0]))
            .collect();
        Ok(EngquistOsher {
            a0: comp.value(0.0),
            comp,
            breaks,
            increasing,
        })
    }

    /// `∫_0^u max(A', 0)` when `positive`, else `∫_0^u min(A', 0)`.
    fn part(&self, u: f64, positive: bool) -> f64 {
        let mut acc = 0.0;
        for (w, &inc) in self.breaks.windows(2).zip(&self.increasing) {
            if w[0] >= u {
                break;
            }
            if inc == positive {
                let hi = w[1].min(u);
                acc += self.comp.value(hi) - self.comp.value(w[0]);
            }
        }
        // states above M continue the last piece
        if let (Some(&last), Some(&inc)) = (self.breaks.last(), self.increasing.last()) {
            if u > last && inc == positive {
                acc += self.comp.value(u) - self.comp.value(last);
            }
        }
        acc
    }

    pub fn flux(&self, u: f64, w: f64) -> f64 {
        self.a0 + self.part(u, true) + self.part(w, false)
    }
}

/// Advances `initial` to `t_end` with the explicit Engquist–Osher scheme.
/// The time step is `cfl · dx / max|A'|`, shortened at the end to land on
/// `t_end`. Outflow boundaries use zero-gradient ghost cells.
pub fn godunov_run(
    flux: &FluxSpec,
    initial: &MacroField,
    t_end: f64,
    cfl: f64,
    boundary: Boundary,
) -> Result<MacroField> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::config("solver.cfl", format!("{cfl} is outside (0, 1]")));
    }
    if !(t_end >= initial.t) {
        return Err(Error::config("solver.t_end", "must not precede the initial time"));
    }
    let eo = EngquistOsher::new(flux)?;
    let dx = initial.dx();
    let speed = flux.lipschitz_bound().max(1e-12);
    let dt_max = cfl * dx / speed;
    let nx = initial.nx();
    let mut rho = initial.rho.clone();
    let mut t = initial.t;
    let mut fluxes = vec![0.0; nx + 1];
    while t < t_end {
        let dt = dt_max.min(t_end - t);
        // interface k sits between cells k-1 and k
        fluxes.par_iter_mut().enumerate().for_each(|(k, out)| {
            let (l, r) = match boundary {
                Boundary::Periodic => ((k + nx - 1) % nx, k % nx),
                Boundary::Outflow => (k.saturating_sub(1), k.min(nx - 1)),
            };
            *out = eo.flux(rho[l], rho[r]);
        });
        let lambda = dt / dx;
        rho.par_iter_mut()
            .enumerate()
            .for_each(|(i, r)| *r -= lambda * (fluxes[i + 1] - fluxes[i]));
        t = if t_end - t <= dt_max { t_end } else { t + dt };
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: 0 });
        }
    }
    MacroField::new(initial.x_min, initial.x_max, rho, t)
}

/// `Σ |a_i - b_i| dx`.
pub fn l1_distance(a: &MacroField, b: &MacroField) -> Result<f64> {
    if !a.same_grid(b) {
        return Err(Error::Precondition(format!(
            "grid mismatch: {} cells on [{}, {}] vs {} cells on [{}, {}]",
            a.nx(),
            a.x_min,
            a.x_max,
            b.nx(),
            b.x_min,
            b.x_max
        )));
    }
    Ok(a.rho.iter().zip(&b.rho).map(|(x, y)| (x - y).abs()).sum::<f64>() * a.dx())
}
