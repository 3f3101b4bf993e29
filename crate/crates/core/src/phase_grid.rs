//! Phase space `[x_min, x_max] × [0, M]` and kinetic densities on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Outflow,
}

/// Grid parameters as they appear in run configurations. The number of
/// velocity cells is derived as `round(M / (eps / n_sub))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub m_cap: f64,
    pub eps: f64,
    pub n_sub: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseGrid {
    x_min: f64,
    x_max: f64,
    nx: usize,
    dx: f64,
    m_cap: f64,
    nv: usize,
    dv: f64,
    eps: f64,
    n_sub: usize,
    boundary: Boundary,
}

const EDGE_TOL: f64 = 1e-9;

impl PhaseGrid {
    pub fn new(spec: &GridSpec, boundary: Boundary) -> Result<Self> {
        if !(spec.x_max > spec.x_min) || !spec.x_min.is_finite() || !spec.x_max.is_finite() {
            return Err(Error::config("grid.x_max", "need finite x_min < x_max"));
        }
        if spec.nx == 0 {
            return Err(Error::config("grid.nx", "must be positive"));
        }
        if !(spec.m_cap > 0.0 && spec.m_cap.is_finite()) {
            return Err(Error::config("grid.m_cap", "must be positive and finite"));
        }
        if !(spec.eps > 0.0 && spec.eps.is_finite()) {
            return Err(Error::config("grid.eps", "must be positive and finite"));
        }
        if spec.n_sub == 0 {
            return Err(Error::config("grid.n_sub", "must be positive"));
        }
        let dv_target = spec.eps / spec.n_sub as f64;
        let nv = (spec.m_cap / dv_target).round() as usize;
        if nv == 0 {
            return Err(Error::config("grid.n_sub", "velocity grid has no cells"));
        }
        let dv = spec.m_cap / nv as f64;
        if (spec.n_sub as f64 * dv - spec.eps).abs() > EDGE_TOL * spec.eps {
            return Err(Error::config(
                "grid.n_sub",
                format!(
                    "eps = {} is not n_sub × dv: M = {} splits into {} cells of width {}, \
                     and {} of them span {}",
                    spec.eps,
                    spec.m_cap,
                    nv,
                    dv,
                    spec.n_sub,
                    spec.n_sub as f64 * dv
                ),
            ));
        }
        Ok(PhaseGrid {
            x_min: spec.x_min,
            x_max: spec.x_max,
            nx: spec.nx,
            dx: (spec.x_max - spec.x_min) / spec.nx as f64,
            m_cap: spec.m_cap,
            nv,
            dv,
            eps: spec.eps,
            n_sub: spec.n_sub,
            boundary,
        })
    }

    /// A single-column grid, for working on velocity profiles alone.
    pub fn column(m_cap: f64, nv: usize, eps: f64) -> Result<Self> {
        if nv == 0 {
            return Err(Error::config("grid.nv", "must be positive"));
        }
        let dv = m_cap / nv as f64;
        let n_sub = (eps / dv).round().max(1.0) as usize;
        PhaseGrid::new(
            &GridSpec {
                x_min: 0.0,
                x_max: 1.0,
                nx: 1,
                m_cap,
                eps,
                n_sub,
            },
            Boundary::Periodic,
        )
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            x_min: self.x_min,
            x_max: self.x_max,
            nx: self.nx,
            m_cap: self.m_cap,
            eps: self.eps,
            n_sub: self.n_sub,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn m_cap(&self) -> f64 {
        self.m_cap
    }
    pub fn nv(&self) -> usize {
        self.nv
    }
    pub fn dv(&self) -> f64 {
        self.dv
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn n_sub(&self) -> usize {
        self.n_sub
    }
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }

    pub fn v_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dv
    }

    /// Entropy-ladder value `k` of velocity cell `j`; ladder edges sit on cell edges.
    #[inline]
    pub fn ladder_value(&self, j: usize) -> usize {
        j / self.n_sub + 1
    }

    /// Velocity cells covering ladder step `k = n + 1`, i.e. `[nε, (n+1)ε) ∩ [0, M)`.
    pub fn ladder_cells(&self, n: usize) -> std::ops::Range<usize> {
        let lo = (n * self.n_sub).min(self.nv);
        let hi = ((n + 1) * self.n_sub).min(self.nv);
        lo..hi
    }
}

/// Writes the equilibrium indicator of `[0, rho]` into `col`, with a
/// fractional value in the straddling cell.
pub fn fill_equilibrium(col: &mut [f64], rho: f64, dv: f64) {
    let q = (rho / dv).max(0.0);
    let full = (q.floor() as usize).min(col.len());
    col[..full].fill(1.0);
    if full < col.len() {
        col[full] = (q - full as f64).clamp(0.0, 1.0);
        col[full + 1..].fill(0.0);
    }
}

/// Kinetic density `f(x_i, v_j)` stored row-major: one contiguous velocity
/// column per space cell.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    grid: PhaseGrid,
    pub f: Vec<f64>,
    pub t: f64,
}

impl KineticState {
    pub fn zeros(grid: PhaseGrid) -> Self {
        KineticState {
            f: vec![0.0; grid.nx * grid.nv],
            grid,
            t: 0.0,
        }
    }

    pub fn from_values(grid: PhaseGrid, f: Vec<f64>, t: f64) -> Result<Self> {
        if f.len() != grid.nx * grid.nv {
            return Err(Error::Precondition(format!(
                "kinetic array has {} entries, grid needs {}",
                f.len(),
                grid.nx * grid.nv
            )));
        }
        Ok(KineticState { grid, f, t })
    }

    /// Equilibrium density `f(x_i, ·) = 1_[0, rho_i]`.
    pub fn from_macro(grid: PhaseGrid, rho: &[f64]) -> Result<Self> {
        if rho.len() != grid.nx {
            return Err(Error::Precondition(format!(
                "density has {} cells, grid has {}",
                rho.len(),
                grid.nx
            )));
        }
        let mut state = KineticState::zeros(grid);
        for (i, &r) in rho.iter().enumerate() {
            if !(r >= 0.0 && r <= grid.m_cap) {
                return Err(Error::domain("rho", r, format!("[0, {}]", grid.m_cap)));
            }
            fill_equilibrium(state.column_mut(i), r, grid.dv);
        }
        Ok(state)
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let nv = self.grid.nv;
        &self.f[i * nv..(i + 1) * nv]
    }

    pub fn column_mut(&mut self, i: usize) -> &mut [f64] {
        let nv = self.grid.nv;
        &mut self.f[i * nv..(i + 1) * nv]
    }

    pub fn columns(&self) -> std::slice::ChunksExact<'_, f64> {
        self.f.chunks_exact(self.grid.nv)
    }

    /// `ρ_i = Σ_j f_ij dv`.
    pub fn macro_density(&self) -> Vec<f64> {
        let dv = self.grid.dv;
        self.columns().map(|c| column_mass(c, dv)).collect()
    }

    /// `S_i = Σ_j v_j f_ij dv` with `v_j` the cell centre.
    pub fn gibbs_entropy(&self) -> Vec<f64> {
        self.columns()
            .map(|c| column_moment(c, &self.grid, |v| v))
            .collect()
    }

    /// `∬ f dv dx`.
    pub fn total_mass(&self) -> f64 {
        self.macro_density().iter().sum::<f64>() * self.grid.dx
    }

    /// `∬ w(v) f dv dx` with `w` sampled at cell centres.
    pub fn total_moment(&self, w: impl Fn(f64) -> f64) -> f64 {
        let weights: Vec<f64> = (0..self.grid.nv).map(|j| w(self.grid.v_center(j))).collect();
        self.columns()
            .map(|c| c.iter().zip(&weights).map(|(f, w)| f * w).sum::<f64>())
            .sum::<f64>()
            * self.grid.dv
            * self.grid.dx
    }

    /// `∬ η_ε f dv dx` with the integer ladder `η_ε = k` on `[(k-1)ε, kε)`.
    pub fn ladder_entropy(&self) -> f64 {
        self.columns()
            .map(|c| ladder_moment(c, &self.grid))
            .sum::<f64>()
            * self.grid.dx
    }

    pub fn is_finite(&self) -> bool {
        self.f.iter().all(|v| v.is_finite())
    }

    /// `(min f, max f)` over the whole state.
    pub fn range(&self) -> (f64, f64) {
        self.f
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

pub fn column_mass(col: &[f64], dv: f64) -> f64 {
    col.iter().sum::<f64>() * dv
}

pub fn column_moment(col: &[f64], grid: &PhaseGrid, w: impl Fn(f64) -> f64) -> f64 {
    col.iter()
        .enumerate()
        .map(|(j, f)| w(grid.v_center(j)) * f)
        .sum::<f64>()
        * grid.dv
}

/// `Σ_j η_ε(v_j) f_j dv`.
pub fn ladder_moment(col: &[f64], grid: &PhaseGrid) -> f64 {
    col.iter()
        .enumerate()
        .map(|(j, f)| grid.ladder_value(j) as f64 * f)
        .sum::<f64>()
        * grid.dv
}
