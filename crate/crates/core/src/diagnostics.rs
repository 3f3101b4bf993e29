//! Runtime checks on kinetic states: deviation from equilibrium, entropy
//! estimate accumulators, the kinetic entropy inequality, the defect measure,
//! the perturbed-flux ratio and the measure-valued decomposition near `δ(v-ρ)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bgk::{RunObserver, StepReport};
use crate::error::{Error, Result};
use crate::model::FluxSpec;
use crate::phase_grid::{column_mass, column_moment, ladder_moment, KineticState, PhaseGrid};
use crate::projection::{equilibrium_projection, ConvexSample, ProjectionResult};

/// Gram matrices with a larger condition number are treated as degenerate.
pub const GRAM_CONDITION_LIMIT: f64 = 1e8;

/// `∫ v (f - Π^eq_f) dv / ∫ f dv`; zero for empty columns.
pub fn deviation(f_col: &[f64], grid: &PhaseGrid) -> f64 {
    let mass = column_mass(f_col, grid.dv());
    if mass <= 0.0 {
        return 0.0;
    }
    first_moment_gap(f_col, grid) / mass
}

/// The same gap normalized by the Gibbs entropy `∫ v f dv`.
pub fn deviation_relative(f_col: &[f64], grid: &PhaseGrid) -> f64 {
    let s = column_moment(f_col, grid, |v| v);
    if s <= 0.0 {
        return 0.0;
    }
    first_moment_gap(f_col, grid) / s
}

fn first_moment_gap(f_col: &[f64], grid: &PhaseGrid) -> f64 {
    let eq = equilibrium_projection(f_col, grid);
    f_col
        .iter()
        .zip(&eq)
        .enumerate()
        .map(|(j, (f, e))| grid.v_center(j) * (f - e))
        .sum::<f64>()
        * grid.dv()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationBound {
    /// `∫ v (f - Π^eq) dv`
    pub lhs: f64,
    /// `4ε ∫ v f dv`
    pub rhs_gibbs: f64,
    /// `4ε ∫ f dv`
    pub rhs_mass: f64,
    /// `lhs ≤ max(rhs_gibbs, rhs_mass)`
    pub holds: bool,
}

pub fn deviation_bound_check(f_col: &[f64], grid: &PhaseGrid) -> DeviationBound {
    let lhs = first_moment_gap(f_col, grid);
    let rhs_gibbs = 4.0 * grid.eps() * column_moment(f_col, grid, |v| v);
    let rhs_mass = 4.0 * grid.eps() * column_mass(f_col, grid.dv());
    DeviationBound {
        lhs,
        rhs_gibbs,
        rhs_mass,
        holds: lhs <= rhs_gibbs.max(rhs_mass),
    }
}

/// How the relaxation source is integrated over a substep of length `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Exact integral along the frozen-projection relaxation, where
    /// `f(s) - Π = (f - Π) e^{-s/h}`: weight `1 - e^{-dt/h}`.
    #[default]
    Exact,
    /// `dt/h` times the integrand at the start of the substep.
    LeftRectangle,
}

impl Quadrature {
    /// Weight `w` such that `(1/h) ∫_0^dt g(s) ds ≈ w · g(0)`.
    pub fn weight(self, dt: f64, h: f64) -> f64 {
        match self {
            Quadrature::Exact => -(-dt / h).exp_m1(),
            Quadrature::LeftRectangle => dt / h,
        }
    }
}

/// Running totals of the four entropy-estimate integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyEstimates {
    /// `(1/h) ∫∬ η_ε (f - Π^ε)`
    pub e1_dissipation: f64,
    /// `(ε/h) ∫∬ |f - Π^ε|`
    pub e2_l1: f64,
    /// `(ε/h) ∫∬ f 1_[ρ+ε, M]`
    pub e3_upper_tail: f64,
    /// `(ε/h) ∫∬ (1 - f) 1_[0, max(0, ρ-ε)]`
    pub e4_lower_gap: f64,
    /// Smallest per-column `Σ η_ε (f - Π^ε) dv` seen.
    pub e1_integrand_min: f64,
    pub domination_failures: u64,
}

impl Default for EntropyEstimates {
    fn default() -> Self {
        EntropyEstimates {
            e1_dissipation: 0.0,
            e2_l1: 0.0,
            e3_upper_tail: 0.0,
            e4_lower_gap: 0.0,
            e1_integrand_min: f64::INFINITY,
            domination_failures: 0,
        }
    }
}

/// Length of `[a, b] ∩ [lo, hi]`.
fn overlap(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    (b.min(hi) - a.max(lo)).max(0.0)
}

impl EntropyEstimates {
    /// Adds the contribution of one relaxation substep; `before` is the
    /// state entering it and `projections` the frozen `Π^ε` per column.
    pub fn update(
        &mut self,
        before: &[f64],
        projections: &[ProjectionResult],
        grid: &PhaseGrid,
        dt: f64,
        h: f64,
        rule: Quadrature,
    ) {
        let weight = rule.weight(dt, h) * grid.dx();
        let (eps, dv, m) = (grid.eps(), grid.dv(), grid.m_cap());
        let mut sums = [0.0_f64; 4];
        for (col, proj) in before.chunks_exact(grid.nv()).zip(projections) {
            let rho = proj.rho;
            let i1 = ladder_moment(col, grid) - ladder_moment(&proj.pi, grid);
            let i2: f64 = col.iter().zip(&proj.pi).map(|(f, p)| (f - p).abs()).sum::<f64>() * dv;
            let (tail_lo, gap_hi) = (rho + eps, (rho - eps).max(0.0));
            let mut i3 = 0.0;
            let mut i4 = 0.0;
            for (j, &f) in col.iter().enumerate() {
                let (lo, hi) = (j as f64 * dv, (j + 1) as f64 * dv);
                i3 += f * overlap(tail_lo, m, lo, hi);
                i4 += (1.0 - f) * overlap(0.0, gap_hi, lo, hi);
            }
            self.e1_integrand_min = self.e1_integrand_min.min(i1);
            if !proj.dominated {
                self.domination_failures += 1;
            }
            sums[0] += i1;
            sums[1] += eps * i2;
            sums[2] += eps * i3;
            sums[3] += eps * i4;
        }
        self.e1_dissipation += weight * sums[0];
        self.e2_l1 += weight * sums[1];
        self.e3_upper_tail += weight * sums[2];
        self.e4_lower_gap += weight * sums[3];
    }
}

/// A state together with the per-band boundary outflow accumulated since
/// the start of the run (zero for periodic grids).
#[derive(Debug, Clone)]
pub struct EntropySnapshot<'a> {
    pub state: &'a KineticState,
    pub cumulative_outflow: &'a [f64],
}

/// `∬ η'(v) f dv dx + Σ_j η'(v_j) outflow_j dv`.
fn balanced_moment(snap: &EntropySnapshot<'_>, eta: ConvexSample) -> f64 {
    let grid = snap.state.grid();
    let inside = snap.state.total_moment(|v| eta.slope(v));
    let out: f64 = snap
        .cumulative_outflow
        .iter()
        .enumerate()
        .map(|(j, o)| eta.slope(grid.v_center(j)) * o)
        .sum::<f64>()
        * grid.dv();
    inside + out
}

/// Largest increase per unit time of `∬ η' f dv dx` between consecutive
/// snapshots, after crediting what left through the boundary. Returns 0
/// when the moment never increases.
pub fn kinetic_entropy_inequality_check(
    snapshots: &[EntropySnapshot<'_>],
    eta: ConvexSample,
) -> Result<f64> {
    if snapshots.len() < 2 {
        return Err(Error::Precondition(
            "need at least two snapshots".to_string(),
        ));
    }
    let mut worst = 0.0_f64;
    for w in snapshots.windows(2) {
        let dt = w[1].state.t - w[0].state.t;
        if dt <= 0.0 {
            return Err(Error::Precondition("snapshot times must increase".into()));
        }
        let rate = (balanced_moment(&w[1], eta) - balanced_moment(&w[0], eta)) / dt;
        worst = worst.max(rate);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectField {
    /// `m[i * nv + j]`: value at the upper edge of velocity cell `j`.
    pub m: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// `max_i |m(x_i, M)|`
    pub top_max_abs: f64,
}

/// Defect measure closing `∂_t f + A'(v) ∂_x f = ∂_v m` between two
/// consecutive states: `m(v) = ∫_0^v R dv'` with `R` the discrete residual
/// of the upwind transport operator.
pub fn defect_measure(
    before: &KineticState,
    after: &KineticState,
    flux: &FluxSpec,
    dt: f64,
) -> Result<DefectField> {
    let grid = *before.grid();
    if after.grid() != &grid {
        return Err(Error::Precondition("states live on different grids".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::domain("dt", dt, "(0, inf)"));
    }
    let nx = grid.nx();
    let nv = grid.nv();
    let (dx, dv) = (grid.dx(), grid.dv());
    let speeds: Vec<f64> = (0..nv).map(|j| flux.speed(0, grid.v_center(j))).collect();
    let periodic = grid.boundary() == crate::phase_grid::Boundary::Periodic;
    let mut m = vec![0.0; nx * nv];
    let (mut lo, mut hi, mut top) = (f64::INFINITY, f64::NEG_INFINITY, 0.0_f64);
    for i in 0..nx {
        let left = match (i, periodic) {
            (0, true) => nx - 1,
            (0, false) => 0,
            _ => i - 1,
        };
        let right = match (i + 1 == nx, periodic) {
            (true, true) => 0,
            (true, false) => i,
            _ => i + 1,
        };
        let (fl, fc, fr) = (before.column(left), before.column(i), before.column(right));
        let new = after.column(i);
        let mut acc = 0.0;
        for j in 0..nv {
            let a = speeds[j];
            let grad = if a >= 0.0 { fc[j] - fl[j] } else { fr[j] - fc[j] };
            let residual = (new[j] - fc[j]) / dt + a * grad / dx;
            acc += residual * dv;
            m[i * nv + j] = acc;
            lo = lo.min(acc);
            hi = hi.max(acc);
        }
        top = top.max(acc.abs());
    }
    Ok(DefectField {
        m,
        min: lo,
        max: hi,
        top_max_abs: top,
    })
}

/// Per-component `|∫ A_i'(v)(f - Π^eq) dv| / ρ`; `None` for empty columns.
pub fn perturbed_flux_check(f_col: &[f64], grid: &PhaseGrid, flux: &FluxSpec) -> Option<Vec<f64>> {
    let rho = column_mass(f_col, grid.dv());
    if rho <= 0.0 {
        return None;
    }
    let eq = equilibrium_projection(f_col, grid);
    Some(
        (0..flux.dim())
            .map(|i| {
                let s: f64 = f_col
                    .iter()
                    .zip(&eq)
                    .enumerate()
                    .map(|(j, (f, e))| flux.speed(i, grid.v_center(j)) * (f - e))
                    .sum::<f64>()
                    * grid.dv();
                s.abs() / rho
            })
            .collect(),
    )
}

/// Cubic Hermite interpolant on `[x0, x1]` with end values `y0, y1` and
/// end slopes `d0, d1`.
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let w = x1 - x0;
    let t = (x - x0) / w;
    let (t2, t3) = (t * t, t * t * t);
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * w * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * w * d1
}

/// `C¹` extension `a_i` of `A_i'` restricted to `(max(0, ρ-ε), ρ+ε)`,
/// vanishing outside `(max(0, ρ-2ε), ρ+2ε)` and blended by cubic Hermite
/// pieces in between.
pub fn extension_value(flux: &FluxSpec, i: usize, rho: f64, eps: f64, v: f64) -> f64 {
    let comp = &flux.components()[i];
    let inner_lo = (rho - eps).max(0.0);
    let inner_hi = rho + eps;
    let outer_lo = (rho - 2.0 * eps).max(0.0);
    let outer_hi = rho + 2.0 * eps;
    if v >= inner_lo && v <= inner_hi {
        comp.slope(v)
    } else if v > outer_lo && v < inner_lo {
        hermite(outer_lo, inner_lo, 0.0, comp.slope(inner_lo), 0.0, comp.curvature(inner_lo), v)
    } else if v > inner_hi && v < outer_hi {
        hermite(inner_hi, outer_hi, comp.slope(inner_hi), 0.0, comp.curvature(inner_hi), 0.0, v)
    } else {
        0.0
    }
}

/// The extensions `a_1..a_d` sampled at velocity cell centres.
pub fn extend_flux_derivative(flux: &FluxSpec, rho: f64, grid: &PhaseGrid) -> Vec<Vec<f64>> {
    (0..flux.dim())
        .map(|i| {
            (0..grid.nv())
                .map(|j| extension_value(flux, i, rho, grid.eps(), grid.v_center(j)))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureStats {
    /// Coefficients of the projection of `f - Π^eq` onto `span{a_i}`.
    pub alpha: Vec<f64>,
    /// `∫ |f_0'(v)| dv`, total variation of the projection.
    pub mu_eps_mass: f64,
    /// Diameter of the support of the projection (cell centres).
    pub supp_diam: f64,
}

/// Least-squares projection `f_0 = Σ α_i a_i` of `f - Π^eq` onto the
/// extended flux derivatives, with the statistics of the measure
/// `f_0'(v) dv` that perturbs `δ(v - ρ)`.
pub fn measure_decomposition(
    f_col: &[f64],
    grid: &PhaseGrid,
    flux: &FluxSpec,
) -> Result<MeasureStats> {
    let dv = grid.dv();
    let rho = column_mass(f_col, dv);
    if !(rho > 0.0) {
        return Err(Error::Precondition("measure decomposition needs rho > 0".into()));
    }
    let eq = equilibrium_projection(f_col, grid);
    let g: Vec<f64> = f_col.iter().zip(&eq).map(|(f, e)| f - e).collect();
    let basis = extend_flux_derivative(flux, rho, grid);
    let d = basis.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dv;

    let gram = DMatrix::from_fn(d, d, |r, c| dot(&basis[r], &basis[c]));
    let rhs = DVector::from_fn(d, |r, _| dot(&basis[r], &g));
    let eig = gram.clone().symmetric_eigen();
    let (mut k_min, mut k_max) = (0, 0);
    for k in 0..d {
        if eig.eigenvalues[k] < eig.eigenvalues[k_min] {
            k_min = k;
        }
        if eig.eigenvalues[k] > eig.eigenvalues[k_max] {
            k_max = k;
        }
    }
    let (lmin, lmax) = (eig.eigenvalues[k_min], eig.eigenvalues[k_max]);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= GRAM_CONDITION_LIMIT) {
        let v = eig.eigenvectors.column(k_min);
        let direction = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .unwrap_or(0);
        return Err(Error::Degenerate { direction, condition });
    }
    let alpha = gram
        .cholesky()
        .ok_or(Error::Degenerate {
            direction: 0,
            condition,
        })?
        .solve(&rhs);
    let alpha: Vec<f64> = alpha.iter().copied().collect();

    let f0: Vec<f64> = (0..grid.nv())
        .map(|j| basis.iter().zip(&alpha).map(|(a, c)| c * a[j]).sum())
        .collect();
    let mu_eps_mass = f0.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let support: Vec<usize> = (0..f0.len()).filter(|&j| f0[j] != 0.0).collect();
    let supp_diam = match (support.first(), support.last()) {
        (Some(&a), Some(&b)) => grid.v_center(b) - grid.v_center(a),
        _ => 0.0,
    };
    Ok(MeasureStats {
        alpha,
        mu_eps_mass,
        supp_diam,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuSummary {
    pub alpha_max: f64,
    pub mu_eps_mass_max: f64,
    pub supp_diam_max: f64,
    pub degenerate_columns: u64,
}

/// One line of the diagnostics time series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub total_mass: f64,
    /// Mass that has left through the boundary so far (negative for inflow).
    pub mass_out: f64,
    /// `∬ (1 + v) f`
    pub moment_one_plus_v: f64,
    pub eta_entropy: f64,
    pub eta_entropy_sup: f64,
    pub gibbs: f64,
    pub e1_dissipation: f64,
    pub e1_total: f64,
    pub e2_l1: f64,
    pub e3_upper_tail: f64,
    pub e4_lower_gap: f64,
    pub e1_integrand_min: f64,
    /// `max_x D(f)` with the mass normalization.
    pub max_deviation: f64,
    /// `max_x D(f)` normalized by `∫ v f`.
    pub max_deviation_relative: f64,
    /// `max_x [∫ v (f - Π^eq) - 4ε max(∫ f, ∫ v f)]`.
    pub deviation_excess: f64,
    pub domination_failures: u64,
    /// Running minimum of the defect measure.
    pub defect_min: f64,
    pub defect_top_max: f64,
    /// Running worst increase rate of `∬ η' f` (boundary flux credited).
    pub entropy_violation: f64,
    pub flux_ratio_max: f64,
    pub mu: MuSummary,
    pub f_min: f64,
    pub f_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub snapshots: usize,
    pub t_final: f64,
    /// Largest relative change of `∬ f + mass_out` over the snapshots.
    pub mass_drift_rel: f64,
    pub c_flux: f64,
    pub c_alpha: f64,
    pub e1_final: f64,
    pub e1_total_final: f64,
    pub e2_final: f64,
    pub e3_final: f64,
    pub e4_final: f64,
    pub worst_entropy_violation: f64,
    pub worst_defect_negativity: f64,
    pub defect_top_max: f64,
    pub domination_failure_count: u64,
    pub max_deviation: f64,
    pub max_deviation_relative: f64,
    pub max_deviation_excess: f64,
    pub supp_diam_max: f64,
    pub degenerate_columns: u64,
    pub f_min: f64,
    pub f_max: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsOptions {
    pub quadrature: Quadrature,
    /// Convex function whose derivative weights the kinetic entropy check.
    pub entropy: ConvexSample,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions {
            quadrature: Quadrature::Exact,
            entropy: ConvexSample::HalfSquare,
        }
    }
}

/// Observer computing a [`DiagnosticsRecord`] per snapshot while a run
/// progresses. Step-level quantities (estimates, defect measure, entropy
/// balance) are evaluated on every step.
pub struct RunDiagnostics {
    flux: FluxSpec,
    options: DiagnosticsOptions,
    estimates: EntropyEstimates,
    cumulative_outflow: Vec<f64>,
    eta_sup: f64,
    defect_min: f64,
    defect_top_max: f64,
    entropy_violation: f64,
    initial_mass: Option<f64>,
    steps: usize,
    c_flux: f64,
    c_alpha: f64,
    pub records: Vec<DiagnosticsRecord>,
}

impl RunDiagnostics {
    pub fn new(flux: FluxSpec, options: DiagnosticsOptions) -> Self {
        RunDiagnostics {
            flux,
            options,
            estimates: EntropyEstimates::default(),
            cumulative_outflow: Vec::new(),
            eta_sup: f64::NEG_INFINITY,
            defect_min: f64::INFINITY,
            defect_top_max: 0.0,
            entropy_violation: 0.0,
            initial_mass: None,
            steps: 0,
            c_flux: 0.0,
            c_alpha: 0.0,
            records: Vec::new(),
        }
    }

    pub fn estimates(&self) -> &EntropyEstimates {
        &self.estimates
    }

    pub fn cumulative_outflow(&self) -> &[f64] {
        &self.cumulative_outflow
    }

    pub fn summary(&self) -> RunSummary {
        let last = self.records.last();
        let fold = |f: fn(&DiagnosticsRecord) -> f64| {
            self.records.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
        };
        let m0 = self.initial_mass.unwrap_or(0.0);
        let mass_drift_rel = self
            .records
            .iter()
            .map(|r| (r.total_mass + r.mass_out - m0).abs() / m0.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        RunSummary {
            steps: self.steps,
            snapshots: self.records.len(),
            t_final: last.map_or(0.0, |r| r.t),
            mass_drift_rel,
            c_flux: self.c_flux,
            c_alpha: self.c_alpha,
            e1_final: self.estimates.e1_dissipation,
            e1_total_final: self.eta_sup.max(0.0) + self.estimates.e1_dissipation,
            e2_final: self.estimates.e2_l1,
            e3_final: self.estimates.e3_upper_tail,
            e4_final: self.estimates.e4_lower_gap,
            worst_entropy_violation: self.entropy_violation,
            worst_defect_negativity: if self.defect_min.is_finite() {
                self.defect_min.min(0.0)
            } else {
                0.0
            },
            defect_top_max: self.defect_top_max,
            domination_failure_count: self.estimates.domination_failures,
            max_deviation: fold(|r| r.max_deviation),
            max_deviation_relative: fold(|r| r.max_deviation_relative),
            max_deviation_excess: fold(|r| r.deviation_excess),
            supp_diam_max: fold(|r| r.mu.supp_diam_max),
            degenerate_columns: self.records.iter().map(|r| r.mu.degenerate_columns).sum(),
            f_min: self.records.iter().map(|r| r.f_min).fold(f64::INFINITY, f64::min),
            f_max: fold(|r| r.f_max),
        }
    }
}

impl RunObserver for RunDiagnostics {
    fn on_step(
        &mut self,
        before: &KineticState,
        after: &KineticState,
        report: &StepReport,
    ) -> Result<()> {
        let grid = *after.grid();
        self.steps = report.step;
        for relax in &report.relaxations {
            self.estimates.update(
                &relax.before,
                &relax.projections,
                &grid,
                relax.dt,
                report.h,
                self.options.quadrature,
            );
        }
        let defect = defect_measure(before, after, &self.flux, report.dt)?;
        self.defect_min = self.defect_min.min(defect.min);
        self.defect_top_max = self.defect_top_max.max(defect.top_max_abs);

        if self.cumulative_outflow.is_empty() {
            self.cumulative_outflow = vec![0.0; grid.nv()];
        }
        let prev = self.cumulative_outflow.clone();
        for (c, o) in self.cumulative_outflow.iter_mut().zip(&report.boundary_outflow) {
            *c += o;
        }
        let rate = kinetic_entropy_inequality_check(
            &[
                EntropySnapshot {
                    state: before,
                    cumulative_outflow: &prev,
                },
                EntropySnapshot {
                    state: after,
                    cumulative_outflow: &self.cumulative_outflow,
                },
            ],
            self.options.entropy,
        )?;
        self.entropy_violation = self.entropy_violation.max(rate);
        Ok(())
    }

    fn on_snapshot(&mut self, step: usize, state: &KineticState) -> Result<()> {
        let grid = *state.grid();
        let eps = grid.eps();
        let total_mass = state.total_mass();
        self.initial_mass.get_or_insert(total_mass);
        let mass_out = self.cumulative_outflow.iter().sum::<f64>() * grid.dv();
        let eta_entropy = state.ladder_entropy();
        self.eta_sup = self.eta_sup.max(eta_entropy);

        let mut max_dev = 0.0_f64;
        let mut max_dev_rel = 0.0_f64;
        let mut excess = f64::NEG_INFINITY;
        let mut flux_ratio = 0.0_f64;
        let mut mu = MuSummary {
            alpha_max: 0.0,
            mu_eps_mass_max: 0.0,
            supp_diam_max: 0.0,
            degenerate_columns: 0,
        };
        for col in state.columns() {
            max_dev = max_dev.max(deviation(col, &grid));
            max_dev_rel = max_dev_rel.max(deviation_relative(col, &grid));
            let b = deviation_bound_check(col, &grid);
            excess = excess.max(b.lhs - b.rhs_gibbs.max(b.rhs_mass));
            if let Some(r) = perturbed_flux_check(col, &grid, &self.flux) {
                flux_ratio = r.into_iter().fold(flux_ratio, f64::max);
            }
            if column_mass(col, grid.dv()) > 0.0 {
                match measure_decomposition(col, &grid, &self.flux) {
                    Ok(s) => {
                        let a = s.alpha.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                        mu.alpha_max = mu.alpha_max.max(a);
                        mu.mu_eps_mass_max = mu.mu_eps_mass_max.max(s.mu_eps_mass);
                        mu.supp_diam_max = mu.supp_diam_max.max(s.supp_diam);
                    }
                    Err(Error::Degenerate { .. }) => mu.degenerate_columns += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        self.c_flux = self.c_flux.max(flux_ratio / eps);
        self.c_alpha = self.c_alpha.max(mu.alpha_max / eps);
        let (f_min, f_max) = state.range();
        self.records.push(DiagnosticsRecord {
            step,
            t: state.t,
            total_mass,
            mass_out,
            moment_one_plus_v: state.total_moment(|v| 1.0 + v),
            eta_entropy,
            eta_entropy_sup: self.eta_sup,
            gibbs: state.total_moment(|v| v),
            e1_dissipation: self.estimates.e1_dissipation,
            e1_total: self.eta_sup + self.estimates.e1_dissipation,
            e2_l1: self.estimates.e2_l1,
            e3_upper_tail: self.estimates.e3_upper_tail,
            e4_lower_gap: self.estimates.e4_lower_gap,
            e1_integrand_min: self.estimates.e1_integrand_min,
            max_deviation: max_dev,
            max_deviation_relative: max_dev_rel,
            deviation_excess: excess,
            domination_failures: self.estimates.domination_failures,
            defect_min: if self.defect_min.is_finite() { self.defect_min } else { 0.0 },
            defect_top_max: self.defect_top_max,
            entropy_violation: self.entropy_violation,
            flux_ratio_max: flux_ratio,
            mu,
            f_min,
            f_max,
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgk::{relaxation_step, run, transport_step, Splitting, SolverConfig};
    use crate::model::FluxDef;
    use crate::phase_grid::{Boundary, GridSpec};
    use crate::projection::variational_projection;

    fn col_grid(m: f64, nv: usize, eps: f64) -> PhaseGrid {
        PhaseGrid::column(m, nv, eps).unwrap()
    }

    fn burgers(m: f64) -> FluxSpec {
        FluxSpec::new(&FluxDef::burgers(), m).unwrap()
    }

    #[test]
    fn deviation_cases() {
        let g = col_grid(1.0, 100, 0.1);
        let eq = KineticState::from_macro(g, &[0.43]).unwrap();
        assert_eq!(deviation(eq.column(0), &g), 0.0);
        assert_eq!(deviation(&vec![0.0; 100], &g), 0.0);
        // move δ = 0.3 (in f units) from the top straddling cell up by k = 7 cells
        let mut f = eq.column(0).to_vec();
        f[42] -= 0.3;
        f[49] += 0.3;
        let want = 0.3 * g.dv() * 7.0 * g.dv() / 0.43;
        assert!((deviation(&f, &g) - want).abs() < 1e-14);
    }

    #[test]
    fn deviation_bound_cases() {
        let g = col_grid(1.0, 100, 0.1);
        let eq = KineticState::from_macro(g, &[0.43]).unwrap();
        let b = deviation_bound_check(eq.column(0), &g);
        assert_eq!(b.lhs, 0.0);
        assert!(b.holds);

        // mass spread over [ρ-ε, ρ+ε]: lhs ≤ ∫_{ρ-ε}^{ρ+ε} v dv = 2ερ
        let rho = 0.43;
        let mut f = vec![0.0; 100];
        f[..33].fill(1.0);
        f[33..53].fill(0.5);
        let bnd = deviation_bound_check(&f, &g);
        assert!((column_mass(&f, g.dv()) - rho).abs() < 1e-12);
        assert!(bnd.lhs <= 2.0 * 0.1 * rho && bnd.holds, "{bnd:?}");

        // mass ε at the top of the box
        let mut f = vec![0.0; 100];
        f[90..].fill(1.0);
        let bnd = deviation_bound_check(&f, &g);
        assert!((bnd.lhs - 0.1 * 0.9).abs() < 1e-12);
        assert!(!bnd.holds);
    }

    #[test]
    fn quadrature_weights() {
        assert!((Quadrature::Exact.weight(1e-3, 1e-3) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(Quadrature::LeftRectangle.weight(2e-3, 1e-3), 2.0);
        assert_eq!(Quadrature::Exact.weight(1.0, 1e-9), 1.0);
    }

    #[test]
    fn estimates_vanish_on_equilibria() {
        let g = PhaseGrid::new(
            &GridSpec { x_min: 0.0, x_max: 1.0, nx: 4, m_cap: 1.0, eps: 0.2, n_sub: 4 },
            Boundary::Periodic,
        )
        .unwrap();
        let mut s = KineticState::from_macro(g, &[0.1, 0.3, 0.55, 0.8]).unwrap();
        let before = s.f.clone();
        let p = relaxation_step(&mut s, 1e-3, 1e-3).unwrap();
        let mut e = EntropyEstimates::default();
        e.update(&before, &p, &g, 1e-3, 1e-3, Quadrature::Exact);
        assert_eq!((e.e1_dissipation, e.e2_l1, e.e3_upper_tail, e.e4_lower_gap), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(e.e1_integrand_min, 0.0);
    }

    #[test]
    fn estimates_scale_with_eps_over_h_under_left_rectangle() {
        let g = col_grid(1.0, 20, 0.2);
        let f: Vec<f64> = (0..20).map(|j| ((j * 7) % 11) as f64 / 10.0).collect();
        let p = vec![variational_projection(&f, &g)];
        let mut a = EntropyEstimates::default();
        let mut b = EntropyEstimates::default();
        a.update(&f, &p, &g, 1e-3, 2e-3, Quadrature::LeftRectangle);
        b.update(&f, &p, &g, 1e-3, 1e-3, Quadrature::LeftRectangle);
        assert_eq!(b.e2_l1, 2.0 * a.e2_l1);
        assert_eq!(b.e3_upper_tail, 2.0 * a.e3_upper_tail);
        assert_eq!(b.e4_lower_gap, 2.0 * a.e4_lower_gap);
        assert!(a.e2_l1 > 0.0 && a.e3_upper_tail > 0.0 && a.e4_lower_gap > 0.0);
    }

    #[test]
    fn e3_e4_regions() {
        // ρ = 0.5, ε = 0.1: f has 0.05 of mass above ρ+ε and a gap of 0.05 below ρ-ε
        let g = col_grid(1.0, 100, 0.1);
        let mut f = vec![0.0; 100];
        f[..50].fill(1.0);
        f[10..15].fill(0.0);
        f[80..85].fill(1.0);
        let p = vec![variational_projection(&f, &g)];
        let mut e = EntropyEstimates::default();
        e.update(&f, &p, &g, 1.0, 1.0, Quadrature::LeftRectangle);
        assert!((e.e3_upper_tail - 0.1 * 0.05).abs() < 1e-14);
        assert!((e.e4_lower_gap - 0.1 * 0.05).abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn e1_integrand_is_non_negative(
                f in proptest::collection::vec(0.0f64..=1.0, 60),
                n_sub in prop::sample::select(vec![1usize, 2, 3, 4, 5, 6, 10, 12, 15, 20]),
            ) {
                let g = col_grid(1.0, 60, n_sub as f64 / 60.0);
                let p = vec![variational_projection(&f, &g)];
                let mut e = EntropyEstimates::default();
                e.update(&f, &p, &g, 1e-3, 1e-3, Quadrature::Exact);
                prop_assert!(e.e1_integrand_min >= -1e-12);
            }
        }
    }

    fn periodic_grid(nx: usize) -> PhaseGrid {
        PhaseGrid::new(
            &GridSpec { x_min: 0.0, x_max: 1.0, nx, m_cap: 2.0, eps: 0.1, n_sub: 5 },
            Boundary::Periodic,
        )
        .unwrap()
    }

    #[test]
    fn entropy_check_needs_two_snapshots() {
        let s = KineticState::zeros(periodic_grid(4));
        let out = vec![0.0; s.grid().nv()];
        let one = [EntropySnapshot { state: &s, cumulative_outflow: &out }];
        assert!(kinetic_entropy_inequality_check(&one, ConvexSample::Linear).is_err());
    }

    #[test]
    fn entropy_check_on_stationary_and_mass() {
        let g = periodic_grid(16);
        let flux = burgers(2.0);
        let rho: Vec<f64> = (0..16).map(|i| 0.5 + 0.4 * (std::f64::consts::TAU * g.x_center(i)).sin()).collect();
        let s0 = KineticState::from_macro(g, &rho).unwrap();
        let mut s1 = s0.clone();
        let dt = crate::bgk::time_step(&g, &flux, 0.9);
        transport_step(&mut s1, &flux, dt).unwrap();
        relaxation_step(&mut s1, dt, 1e-3).unwrap();
        s1.t = dt;
        let zero = vec![0.0; g.nv()];
        let snaps = [
            EntropySnapshot { state: &s0, cumulative_outflow: &zero },
            EntropySnapshot { state: &s1, cumulative_outflow: &zero },
        ];
        assert!(kinetic_entropy_inequality_check(&snaps, ConvexSample::Linear).unwrap() <= 1e-10);
        assert!(kinetic_entropy_inequality_check(&snaps, ConvexSample::HalfSquare).unwrap() <= 1e-12);
        let mut still = s0.clone();
        still.t = 1.0;
        let snaps = [
            EntropySnapshot { state: &s0, cumulative_outflow: &zero },
            EntropySnapshot { state: &still, cumulative_outflow: &zero },
        ];
        assert_eq!(kinetic_entropy_inequality_check(&snaps, ConvexSample::HalfSquare).unwrap(), 0.0);
    }

    #[test]
    fn defect_of_stationary_state_vanishes() {
        let g = periodic_grid(8);
        let s = KineticState::from_macro(g, &[0.3; 8]).unwrap();
        let d = defect_measure(&s, &s, &burgers(2.0), 1e-3).unwrap();
        assert!(d.m.iter().all(|&v| v == 0.0));
        assert_eq!(d.top_max_abs, 0.0);
    }

    #[test]
    fn defect_of_pure_relaxation_matches_closed_form() {
        let g = periodic_grid(1);
        let f: Vec<f64> = (0..g.nv()).map(|j| if j < 120 { 0.5 } else { 0.0 }).collect();
        let before = KineticState::from_values(g, f.clone(), 0.0).unwrap();
        let mut after = before.clone();
        let (dt, h) = (1e-3, 2e-3);
        let p = relaxation_step(&mut after, dt, h).unwrap();
        // single periodic cell: the transport residual vanishes
        let d = defect_measure(&before, &after, &burgers(2.0), dt).unwrap();
        let c = -(-dt / h).exp_m1() / dt;
        let mut acc = 0.0;
        for j in 0..g.nv() {
            acc += (p[0].pi[j] - f[j]) * g.dv();
            assert!((d.m[j] - c * acc).abs() < 1e-12);
        }
        assert!(d.min >= -1e-13);
        assert!(d.top_max_abs < 1e-10);
    }

    #[test]
    fn defect_top_vanishes_along_a_run() {
        struct Check(f64, f64);
        impl RunObserver for Check {
            fn on_step(&mut self, b: &KineticState, a: &KineticState, r: &StepReport) -> Result<()> {
                let d = defect_measure(b, a, &burgers(2.0), r.dt)?;
                self.0 = self.0.max(d.top_max_abs);
                self.1 = self.1.min(d.min);
                Ok(())
            }
        }
        let g = periodic_grid(40);
        let rho: Vec<f64> = (0..40).map(|i| if i < 20 { 0.9 } else { 0.1 }).collect();
        let s = KineticState::from_macro(g, &rho).unwrap();
        let cfg = SolverConfig {
            h: 1e-3,
            cfl: 0.9,
            t_end: 0.2,
            snapshot_stride: 10,
            boundary: Boundary::Periodic,
            splitting: Splitting::Lie,
        };
        let mut c = Check(0.0, 0.0);
        run(s, &burgers(2.0), &cfg, &mut c).unwrap();
        assert!(c.0 <= 1e-10, "top {}", c.0);
        assert!(c.1 >= -1e-10, "min {}", c.1);
    }

    #[test]
    fn perturbed_flux_cases() {
        let g = col_grid(1.0, 100, 0.1);
        let flux = burgers(1.0);
        assert!(perturbed_flux_check(&vec![0.0; 100], &g, &flux).is_none());
        let eq = KineticState::from_macro(g, &[0.37]).unwrap();
        assert_eq!(perturbed_flux_check(eq.column(0), &g, &flux).unwrap(), vec![0.0]);
        // f within the ±ε band: |∫ v (f - Π^eq)| ≤ ∫_{ρ-ε}^{ρ+ε} v dv = 2ερ, ratio ≤ 2ε
        let mut f = vec![0.0; 100];
        f[..27].fill(1.0);
        f[27..47].fill(0.5);
        let r = perturbed_flux_check(&f, &g, &flux).unwrap()[0];
        assert!(r > 0.0 && r <= 2.0 * 0.1, "{r}");
    }

    #[test]
    fn hermite_matches_ends() {
        let (x0, x1, y0, y1, d0, d1) = (0.3, 0.4, 1.5, -0.5, 2.0, 0.7);
        assert!((hermite(x0, x1, y0, y1, d0, d1, x0) - y0).abs() < 1e-15);
        assert!((hermite(x0, x1, y0, y1, d0, d1, x1) - y1).abs() < 1e-15);
        let h = 1e-8;
        let s0 = (hermite(x0, x1, y0, y1, d0, d1, x0 + h) - y0) / h;
        assert!((s0 - d0).abs() < 1e-4);
        let s1 = (y1 - hermite(x0, x1, y0, y1, d0, d1, x1 - h)) / h;
        assert!((s1 - d1).abs() < 1e-4);
    }

    #[test]
    fn extension_cases() {
        let flux = burgers(1.0);
        let (rho, eps) = (0.5, 0.1);
        for v in [0.45, 0.5, 0.55, 0.41] {
            assert_eq!(extension_value(&flux, 0, rho, eps, v), v);
        }
        for v in [0.0, 0.2, 0.29, 0.71, 0.9] {
            assert_eq!(extension_value(&flux, 0, rho, eps, v), 0.0);
        }
        // upper blend midpoint: independent Hermite evaluation on [0.6, 0.7]
        // with y0 = 0.6, d0 = 1, y1 = d1 = 0 at t = 1/2:
        // h00 = 1/2, h10 = 1/8 (times width 0.1)
        let want = 0.5 * 0.6 + 0.125 * 0.1 * 1.0;
        assert!((extension_value(&flux, 0, rho, eps, 0.65) - want).abs() < 1e-15);
        // lower blend midpoint on [0.3, 0.4]: y1 = 0.4, d1 = 1 at t = 1/2:
        // h01 = 1/2, h11 = -1/8
        let want = 0.5 * 0.4 - 0.125 * 0.1;
        assert!((extension_value(&flux, 0, rho, eps, 0.35) - want).abs() < 1e-15);
    }

    #[test]
    fn extension_is_c1() {
        let flux = FluxSpec::new(&FluxDef::polynomial(vec![vec![0.0, 0.0, 0.0, 1.0 / 3.0]]), 1.0).unwrap();
        let (rho, eps) = (0.5, 0.1);
        let a = |v: f64| extension_value(&flux, 0, rho, eps, v);
        for knot in [0.3, 0.4, 0.6, 0.7] {
            let h = 1e-7;
            assert!((a(knot - h) - a(knot + h)).abs() < 1e-6);
            let dl = (a(knot - h) - a(knot - 2.0 * h)) / h;
            let dr = (a(knot + 2.0 * h) - a(knot + h)) / h;
            assert!((dl - dr).abs() < 1e-4, "slope jump at {knot}: {dl} vs {dr}");
        }
    }

    #[test]
    fn decomposition_of_equilibrium_is_trivial() {
        let g = col_grid(1.0, 100, 0.1);
        let eq = KineticState::from_macro(g, &[0.37]).unwrap();
        let s = measure_decomposition(eq.column(0), &g, &burgers(1.0)).unwrap();
        assert_eq!(s.alpha, vec![0.0]);
        assert_eq!(s.mu_eps_mass, 0.0);
        assert_eq!(s.supp_diam, 0.0);
    }

    #[test]
    fn decomposition_matches_scalar_least_squares() {
        let g = col_grid(1.0, 200, 0.1);
        let flux = burgers(1.0);
        let f: Vec<f64> = (0..200).map(|j| if j < 80 { 1.0 } else if j < 120 { 0.25 } else { 0.0 }).collect();
        let rho = column_mass(&f, g.dv());
        let eq = KineticState::from_macro(g, &[rho]).unwrap();
        // d = 1: α = <a, f - Π^eq> / <a, a>
        let a = &extend_flux_derivative(&flux, rho, &g)[0];
        let num: f64 = a.iter().zip(&f).zip(eq.column(0)).map(|((a, f), e)| a * (f - e)).sum();
        let den: f64 = a.iter().map(|a| a * a).sum();
        let s = measure_decomposition(&f, &g, &flux).unwrap();
        assert!((s.alpha[0] - num / den).abs() < 1e-12, "{:?}", s.alpha);
        assert!(s.alpha[0] != 0.0);
        let tv: f64 = a.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() * s.alpha[0].abs();
        assert!((s.mu_eps_mass - tv).abs() < 1e-12);
        assert!(s.supp_diam < 4.0 * g.eps());
    }

    #[test]
    fn decomposition_degenerate_basis() {
        // A = (v²/2, v²/2): identical extensions, singular Gram matrix
        let flux = FluxSpec::new(
            &FluxDef::polynomial(vec![vec![0.0, 0.0, 0.5], vec![0.0, 0.0, 0.5]]),
            1.0,
        )
        .unwrap();
        let g = col_grid(1.0, 100, 0.1);
        let f = vec![0.4; 100];
        assert!(matches!(
            measure_decomposition(&f, &g, &flux),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn decomposition_support_is_within_four_eps() {
        let g = col_grid(1.0, 200, 0.05);
        let flux = burgers(1.0);
        for seed in 0..20u64 {
            let f: Vec<f64> = (0..200).map(|j| (((j as u64 * 2654435761 + seed * 97) % 1000) as f64) / 1000.0).collect();
            let s = measure_decomposition(&f, &g, &flux).unwrap();
            assert!(s.supp_diam < 4.0 * g.eps());
        }
    }

    #[test]
    fn run_diagnostics_smoke() {
        let g = periodic_grid(40);
        let rho: Vec<f64> = (0..40).map(|i| 0.5 + 0.3 * (std::f64::consts::TAU * g.x_center(i)).sin()).collect();
        let s = KineticState::from_macro(g, &rho).unwrap();
        let cfg = SolverConfig {
            h: 1e-3,
            cfl: 0.9,
            t_end: 0.1,
            snapshot_stride: 5,
            boundary: Boundary::Periodic,
            splitting: Splitting::Lie,
        };
        let mut d = RunDiagnostics::new(burgers(2.0), DiagnosticsOptions::default());
        run(s, &burgers(2.0), &cfg, &mut d).unwrap();
        let sum = d.summary();
        assert!(sum.snapshots >= 2);
        assert!(sum.mass_drift_rel < 1e-12);
        assert!(sum.worst_entropy_violation <= 1e-10);
        assert!(sum.worst_defect_negativity >= -1e-10);
        assert!(sum.e2_final > 0.0);
        assert!(sum.supp_diam_max < 4.0 * g.eps());
        for w in d.records.windows(2) {
            assert!(w[1].e2_l1 >= w[0].e2_l1);
        }
    }
}
